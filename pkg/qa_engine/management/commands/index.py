from qa_engine.camse.retrieval import build_index, read_corpus, save_index

from ._base import CamseCommand


class Command(CamseCommand):
    help = "Build a BM25 inverted index from a corpus with one pre-tokenized document per line."

    def add_command_arguments(self, parser):
        parser.add_argument('corpus_path')
        parser.add_argument('out_path')

    def run(self, corpus_path, out_path, **options):
        index = build_index(read_corpus(corpus_path))
        save_index(index, out_path)
        self.stdout.write(f"Indexed {index.doc_count} documents ({len(index.postings)} terms) into {out_path}")
