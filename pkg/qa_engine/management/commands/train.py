from qa_engine.camse.checkpoint import save_checkpoint
from qa_engine.camse.qa import CamseModel, evaluate, load_dataset, train
from qa_engine.camse.text import dedup_train

from ._base import CamseCommand, prepare_evidence, require, vocabulary_and_table


class Command(CamseCommand):
    help = "Train a model from the run configuration and write the best checkpoint and metrics log."

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', help='Override the checkpoint path of the configuration')
        parser.add_argument('--metrics', help='Override the metrics log path of the configuration')

    def run(self, **options):
        rc = self.run_config.replace(checkpoint=options.get('checkpoint'), metrics=options.get('metrics'))
        checkpoint_path = require(rc.checkpoint, 'checkpoint')

        train_set = load_dataset(require(rc.train_data, 'train_data'))
        dev_set = load_dataset(rc.dev_data) if rc.dev_data else []
        test_set = load_dataset(rc.test_data) if rc.test_data else []
        if rc.dedup and test_set:
            train_set = dedup_train(train_set, test_set, threshold=rc.dedup_threshold)

        vocab, table = vocabulary_and_table(rc, train_set + dev_set + test_set)
        train_set, dev_set, test_set = prepare_evidence(rc, vocab, table, [train_set, dev_set, test_set])

        model = CamseModel(vocab, table, rc.camse_config(), rc.scoring_config(), rc.train_config())
        result = train(train_set, dev_set, model, metrics_path=rc.metrics)
        save_checkpoint(checkpoint_path, model, rc)

        summary = {
            'best_epoch': result.best_epoch,
            'best_dev_accuracy': result.best_dev_accuracy,
            'final_train_loss': result.history[-1]['train_loss'],
            'checkpoint': checkpoint_path,
        }
        if test_set:
            summary['test_accuracy'] = evaluate(test_set, model, rc.threads)
        self.emit_json(summary)
