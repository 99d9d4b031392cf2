from dataclasses import fields

from qa_engine.camse.synth import VALID_KINDS, SynthConfig, generate, write_corpus

from ._base import CamseCommand


class Command(CamseCommand):
    help = "Generate a synthetic entity or association corpus (datasets, embeddings, manifest)."

    def add_command_arguments(self, parser):
        parser.add_argument('kind', choices=VALID_KINDS)
        parser.add_argument('out_dir')
        for f in fields(SynthConfig):
            if f.name != 'seed':
                parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=int)

    def run(self, kind, out_dir, **options):
        overrides = {f.name: options[f.name] for f in fields(SynthConfig)
                     if f.name != 'seed' and options.get(f.name) is not None}
        cfg = SynthConfig(seed=self.run_config.seed, **overrides)
        corpus = generate(kind, cfg)
        write_corpus(corpus, cfg, out_dir)
        self.stdout.write(
            f"Wrote {len(corpus.train)} train / {len(corpus.test)} test {kind} instances to {out_dir}"
        )
