from qa_engine.camse.checkpoint import load_checkpoint
from qa_engine.camse.inspection import attention_dump, render_attention_heatmap, write_attention_csv

from ._base import CamseCommand


class Command(CamseCommand):
    help = "Dump per-scale, per-subspace attention weights of a sentence (JSON, optional CSV and heatmap)."

    def add_command_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('text', help='Pre-tokenized sentence')
        parser.add_argument('--out', help='Write the JSON dump to this path')
        parser.add_argument('--csv', help='Also write the weights as CSV')
        parser.add_argument('--heatmap', help='Also render a heatmap image (e.g. attention.png)')
        parser.add_argument('--top', type=int, default=3, help='Keywords listed per subspace')

    def run(self, checkpoint, text, **options):
        model, _ = load_checkpoint(checkpoint)
        dump = attention_dump(model, text, top=options['top'])
        if options.get('csv'):
            write_attention_csv(dump, options['csv'])
        if options.get('heatmap'):
            render_attention_heatmap(dump, options['heatmap'])
        self.emit_json(dump, options.get('out'))
