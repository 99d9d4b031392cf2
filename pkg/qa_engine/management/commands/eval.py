from qa_engine.camse.checkpoint import load_checkpoint
from qa_engine.camse.qa import evaluate_report, load_dataset

from ._base import CamseCommand, prepare_evidence


class Command(CamseCommand):
    help = "Evaluate a checkpoint on a dataset and print its accuracy."

    def add_command_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('dataset')
        parser.add_argument('--report', help='Write the per-instance report as JSON to this path')

    def run(self, checkpoint, dataset, **options):
        model, snapshot = load_checkpoint(checkpoint)
        rc = snapshot.replace(threads=options.get('threads'))
        (instances,) = prepare_evidence(rc, model.vocab, model.table, [load_dataset(dataset)])
        report = evaluate_report(instances, model, threads=rc.threads)
        report['checkpoint'] = str(checkpoint)
        report['dataset'] = str(dataset)
        self.stdout.write(f"accuracy {report['accuracy']:.6f} ({report['correct']}/{report['count']})")
        if options.get('report'):
            self.emit_json(report, options['report'])
