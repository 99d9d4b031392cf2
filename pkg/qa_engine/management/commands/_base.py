"""
Shared plumbing for the engine's management commands.

Every command accepts the global flags --config, --seed, --threads and
--f64, and converts engine exceptions into CommandError with the exit
code of the failure family (1 config, 2 IO/parse, 3 runtime).
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from django.core.management.base import BaseCommand, CommandError

from qa_engine.camse.config import COMPUTE_DTYPE
from qa_engine.camse.exceptions import (
    CamseError,
    ConfigError,
    get_exit_code,
    get_user_friendly_error,
    is_user_error,
)
from qa_engine.camse.numerics import precision
from qa_engine.camse.qa import QaInstance, dataset_texts, load_dataset
from qa_engine.camse.retrieval import (
    attach_bm25_evidence,
    attach_neighbor_evidence,
    build_neighbor_bank,
    load_index,
    train_repr_classifier,
)
from qa_engine.camse.runconfig import RunConfig
from qa_engine.camse.text import EmbeddingTable, Vocabulary, load_embeddings, random_embeddings

logger = logging.getLogger(__name__)


class CamseCommand(BaseCommand):
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Run configuration file (key=value lines)')
        parser.add_argument('--seed', type=int, help='Seed for every random draw')
        parser.add_argument('--threads', type=int, help='Worker threads for evaluation')
        parser.add_argument('--f64', action='store_true', help='Compute in 64-bit precision')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            with precision('f64' if options.get('f64') else COMPUTE_DTYPE):
                self.run_config = self.load_run_config(options)
                return self.run(**options)
        except (CamseError, OSError) as e:
            code = get_exit_code(e)
            message = e.message if isinstance(e, CamseError) else get_user_friendly_error(e)
            if is_user_error(e) or isinstance(e, OSError):
                logger.warning(f"{self.command_name()} failed: {message}")
            else:
                logger.error(f"{self.command_name()} failed: {message}")
            raise CommandError(message, returncode=code)

    def run(self, **options) -> Optional[str]:
        raise NotImplementedError

    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def load_run_config(self, options) -> RunConfig:
        path = options.get('config')
        base = RunConfig.from_file(path) if path else RunConfig()
        return base.replace(seed=options.get('seed'), threads=options.get('threads')).validate()

    def emit_json(self, payload, path=None) -> None:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
        if path:
            Path(path).write_text(text + '\n', encoding='utf-8')
            logger.info(f"Wrote {path}")
        else:
            self.stdout.write(text)


# ============================================================================
# Data Preparation
# ============================================================================

def require(value, key: str):
    """Return a configured path or fail naming the missing key."""
    if not value:
        raise ConfigError(f"Configuration key '{key}' is required for this command")
    return value


def vocabulary_and_table(run_config: RunConfig, instances: Sequence[QaInstance]) -> Tuple[Vocabulary, EmbeddingTable]:
    """Pre-trained vectors when configured, otherwise seeded random vectors over the data."""
    if run_config.embeddings:
        return load_embeddings(run_config.embeddings, trainable=run_config.fine_tune_embeddings)
    vocab = Vocabulary.from_texts(dataset_texts(instances))
    logger.info(f"No embedding file configured; random vectors for {len(vocab) - 1} tokens")
    return vocab, random_embeddings(vocab, run_config.embedding_dim, run_config.seed,
                                    trainable=run_config.fine_tune_embeddings)


def prepare_evidence(run_config: RunConfig, vocab: Vocabulary, table: EmbeddingTable,
                     splits: Sequence[List[QaInstance]]) -> List[List[QaInstance]]:
    """
    Attach evidence according to evidence_source.

    'dataset' keeps the evidence stored in the files; 'bm25' queries the
    configured index; 'neighbors' trains the representation classifier on
    train_data and draws evidence from its solved questions.
    """
    source = run_config.evidence_source
    if source == 'dataset':
        return [list(split) for split in splits]
    if source == 'bm25':
        index = load_index(require(run_config.index, 'index'))
        return [attach_bm25_evidence(split, index, k=run_config.evidence_cap) for split in splits]

    solved = load_dataset(require(run_config.train_data, 'train_data'))
    labelled = [inst for inst in solved if inst.answer is not None]
    classifier = train_repr_classifier(
        [inst.question for inst in labelled],
        [inst.choices[inst.answer] for inst in labelled],
        vocab, table,
        epochs=run_config.repr_epochs, learning_rate=run_config.repr_learning_rate,
        batch_size=run_config.batch_size, seed=run_config.seed,
        context_size=run_config.repr_context_size, hidden_size=run_config.repr_hidden,
        max_len=run_config.max_statement_len,
    )
    bank = build_neighbor_bank(classifier, labelled)
    return [attach_neighbor_evidence(split, classifier, bank, per_class_k=run_config.evidence_cap)
            for split in splits]
