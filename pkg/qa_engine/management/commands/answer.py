from qa_engine.camse.checkpoint import load_checkpoint
from qa_engine.camse.exceptions import DatasetError
from qa_engine.camse.qa import candidate_scores, load_dataset, select_answer
from qa_engine.camse.scoring import score_pair, statement_gates

from ._base import CamseCommand, prepare_evidence


class Command(CamseCommand):
    help = "Answer one question: predicted choice, per-candidate reliability and per-document pair scores."

    def add_command_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('instance_file', help='Dataset file holding exactly one record')
        parser.add_argument('--out', help='Write the answer as JSON to this path')

    def run(self, checkpoint, instance_file, **options):
        model, rc = load_checkpoint(checkpoint)
        instances = load_dataset(instance_file)
        if len(instances) != 1:
            raise DatasetError(f"{instance_file}: expected exactly one record, found {len(instances)}")
        (instance,) = prepare_evidence(rc, model.vocab, model.table, [instances])[0]

        scores = candidate_scores(instance, model).data
        pair_scores = []
        for choice, docs in zip(instance.choices, instance.evidence):
            t1 = model.encode(model.statement(instance.question, choice))
            gates = statement_gates(t1, model.scorer)
            pair_scores.append([
                float(score_pair(t1, model.encode(model.document(doc)), model.scorer, gates=gates)[0].data)
                for doc in docs[:model.train_config.evidence_cap]
            ])

        predicted = select_answer(scores)
        self.emit_json({
            'id': instance.id,
            'predicted': predicted,
            'choice': instance.choices[predicted],
            'gold': instance.answer,
            'scores': [float(s) for s in scores],
            'pair_scores': pair_scores,
        }, options.get('out'))
