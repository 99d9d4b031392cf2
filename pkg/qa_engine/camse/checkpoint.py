"""
Binary checkpoint container.

Layout (little-endian):

    magic  b"CAMSECK\\0"                 8 bytes
    version                             u32
    config snapshot                     u32 length + UTF-8 key=value text
    vocabulary                          u32 count, then (u16 length + UTF-8 token) each
    records                             u32 count, then per record:
        name                            u16 length + UTF-8
        dtype                           u8 (0 = f32, 1 = f64)
        ndim                            u8
        dims                            u32 each
        payload                         raw little-endian values, row-major

Records appear in parameter registration order; the embedding table is
always stored under the name "embeddings". Identical models produce
identical bytes.
"""

import io
import logging
import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from .exceptions import CheckpointError, ConfigError
from .qa import CamseModel
from .runconfig import RunConfig
from .text import EmbeddingTable, Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"CAMSECK\0"
VERSION = 1

_DTYPE_CODES = {np.dtype('<f4'): 0, np.dtype('<f8'): 1}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


def _write_string(out: io.BytesIO, text: str, width: str) -> None:
    data = text.encode('utf-8')
    out.write(struct.pack(f'<{width}', len(data)))
    out.write(data)


def _write_array(out: io.BytesIO, name: str, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder('<'))
    _write_string(out, name, 'H')
    out.write(struct.pack('<BB', _DTYPE_CODES[array.dtype], array.ndim))
    out.write(struct.pack(f'<{array.ndim}I', *array.shape))
    out.write(array.tobytes(order='C'))


def encode_checkpoint(model: CamseModel, run_config: RunConfig) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack('<I', VERSION))
    _write_string(out, run_config.to_text(), 'I')

    tokens = model.vocab.tokens
    out.write(struct.pack('<I', len(tokens)))
    for token in tokens:
        _write_string(out, token, 'H')

    records = [(EmbeddingTable.PARAMETER_NAME, model.table.weights.data)]
    records += [(name, p.data) for name, p in model.params.items() if name != EmbeddingTable.PARAMETER_NAME]
    out.write(struct.pack('<I', len(records)))
    for name, array in records:
        _write_array(out, name, array)
    return out.getvalue()


def save_checkpoint(path, model: CamseModel, run_config: RunConfig) -> None:
    Path(path).write_bytes(encode_checkpoint(model, run_config))
    logger.info(f"Checkpoint saved to {path} ({len(model.params)} parameter tensors)")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self, width: str) -> str:
        (length,) = self.unpack(f'<{width}')
        try:
            return self.take(length).decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError(f"{self.path}: invalid UTF-8 in checkpoint")

    def array(self) -> Tuple[str, np.ndarray]:
        name = self.string('H')
        code, ndim = self.unpack('<BB')
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{self.path}: record '{name}' has unknown dtype code {code}")
        dims = self.unpack(f'<{ndim}I')
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(dims)) if ndim else 1
        payload = self.take(count * dtype.itemsize)
        return name, np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def load_checkpoint(path) -> Tuple[CamseModel, RunConfig]:
    """
    Rebuild a model from a checkpoint.

    Raises:
        CheckpointError: If the file is malformed or its records do not match
                         the parameters the stored configuration implies
    """
    path = str(path)
    with open(path, 'rb') as handle:
        reader = _Reader(handle.read(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = reader.unpack('<I')
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")

    try:
        run_config = RunConfig.from_text(reader.string('I'), source=f"{path} (snapshot)")
    except ConfigError as e:
        raise CheckpointError(f"{path}: invalid configuration snapshot: {e.message}")

    (vocab_count,) = reader.unpack('<I')
    vocab = Vocabulary(reader.string('H') for _ in range(vocab_count))
    if len(vocab) != vocab_count + 1:
        raise CheckpointError(f"{path}: duplicate tokens in stored vocabulary")

    (record_count,) = reader.unpack('<I')
    records = dict(reader.array() for _ in range(record_count))
    if len(records) != record_count:
        raise CheckpointError(f"{path}: duplicate record names")

    table_values = records.pop(EmbeddingTable.PARAMETER_NAME, None)
    if table_values is None or table_values.shape != (len(vocab), run_config.embedding_dim):
        raise CheckpointError(f"{path}: embedding record missing or not {len(vocab)}×{run_config.embedding_dim}")
    table = EmbeddingTable(table_values, trainable=run_config.fine_tune_embeddings)

    try:
        model = CamseModel(vocab, table, run_config.camse_config(), run_config.scoring_config(),
                           run_config.train_config())
    except ConfigError as e:
        raise CheckpointError(f"{path}: stored configuration is inconsistent: {e.message}")

    expected = {name for name in model.params.names() if name != EmbeddingTable.PARAMETER_NAME}
    if set(records) != expected:
        missing = sorted(expected - set(records))
        extra = sorted(set(records) - expected)
        raise CheckpointError(f"{path}: parameter mismatch (missing {missing}, unexpected {extra})")
    for name, values in records.items():
        param = model.params[name]
        if values.shape != param.shape:
            raise CheckpointError(f"{path}: '{name}' has shape {values.shape}, expected {param.shape}")
        param.data[...] = values

    logger.info(f"Loaded checkpoint {path} ({len(records)} parameter records)")
    return model, run_config
