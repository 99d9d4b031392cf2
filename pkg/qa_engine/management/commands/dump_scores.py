from qa_engine.camse.checkpoint import load_checkpoint
from qa_engine.camse.inspection import score_dump

from ._base import CamseCommand


class Command(CamseCommand):
    help = "Dump the SMS/SAS matrix, gate, aggregated sums and score S of one statement/document pair."

    def add_command_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('statement', help='Pre-tokenized question followed by a choice')
        parser.add_argument('document', help='Pre-tokenized evidence document')
        parser.add_argument('--out', help='Write the JSON dump to this path')

    def run(self, checkpoint, statement, document, **options):
        model, _ = load_checkpoint(checkpoint)
        self.emit_json(score_dump(model, statement, document), options.get('out'))
