"""Buildable architecture presets: tiny residual, plain, and dense-concat nets.

All three families share the same backbone skeleton (3x3 stem, three stages,
global average pooling, linear head) so that comparisons isolate the wiring:
``plain`` is ``residual`` with the additive shortcuts removed, and
``dense_concat`` replaces the addition with channel concatenation inside each
stage plus a 1x1 transition conv between stages, which forces every block
input to stay alive for the backward pass.

Layer weights are seeded per layer name, so layers that exist in several
families (stem, block convs, head) receive identical initial values for the
same seed.
"""
from __future__ import annotations

import copy
import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .autograd import Tape, Tensor, backward, concat_channels
from .errors import CheckpointError, ConfigError, GeometryError
from .layers import (
    BatchNormState,
    Conv2dParams,
    LinearParams,
    ResidualBlockParams,
    batch_norm,
    conv2d,
    global_avg_pool,
    linear,
    relu,
    residual_block_forward,
    softmax_cross_entropy,
)

FAMILIES = ("residual", "plain", "dense_concat")

CHECKPOINT_MAGIC = b"FVMODEL1"


@dataclass
class ModelConfig:
    """Architecture preset: family, depth knob n, stage widths, classes, input."""

    family: str = "residual"
    blocks_per_stage: int = 1
    stage_widths: tuple[int, int, int] = (16, 32, 64)
    num_classes: int = 20
    input_size: tuple[int, int, int] = (3, 64, 64)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unsupported model family {self.family!r}; "
                              f"expected one of {FAMILIES}")
        if self.blocks_per_stage < 1:
            raise ConfigError(f"blocks_per_stage must be >= 1, got {self.blocks_per_stage}")
        if len(self.stage_widths) != 3 or any(w < 1 for w in self.stage_widths):
            raise ConfigError(f"stage_widths must be three positive ints, got {self.stage_widths}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.input_size) != 3 or self.input_size[0] != 3:
            raise ConfigError(f"input_size must be (3, h, w), got {self.input_size}")
        self.stage_widths = tuple(int(w) for w in self.stage_widths)
        self.input_size = tuple(int(v) for v in self.input_size)

    @property
    def name(self) -> str:
        return f"{self.family}-n{self.blocks_per_stage}"

    @property
    def backbone_weighted_layers(self) -> int:
        # stem conv + 3 stages * n blocks * 2 convs + classifier
        return 6 * self.blocks_per_stage + 2

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "blocks_per_stage": self.blocks_per_stage,
            "stage_widths": list(self.stage_widths),
            "num_classes": self.num_classes,
            "input_size": list(self.input_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            family=d["family"],
            blocks_per_stage=int(d["blocks_per_stage"]),
            stage_widths=tuple(d["stage_widths"]),
            num_classes=int(d["num_classes"]),
            input_size=tuple(d["input_size"]),
        )


class PlainBlockParams:
    """The residual block's two conv+BN stages without the additive shortcut."""

    def __init__(self, conv1, bn1, conv2, bn2):
        self.conv1 = conv1
        self.bn1 = bn1
        self.conv2 = conv2
        self.bn2 = bn2

    @classmethod
    def create(cls, rng, in_ch: int, out_ch: int, stride: int = 1, dtype=np.float32):
        return cls(
            Conv2dParams.create(rng, in_ch, out_ch, 3, stride=stride, padding=1, dtype=dtype),
            BatchNormState(out_ch, dtype=dtype),
            Conv2dParams.create(rng, out_ch, out_ch, 3, stride=1, padding=1, dtype=dtype),
            BatchNormState(out_ch, dtype=dtype),
        )


def plain_block_forward(x: Tensor, p: PlainBlockParams) -> Tensor:
    out = relu(batch_norm(conv2d(x, p.conv1), p.bn1))
    return relu(batch_norm(conv2d(out, p.conv2), p.bn2))


class DenseBlockParams(PlainBlockParams):
    """Two conv+BN stages whose output is concatenated onto the block input."""


def dense_block_forward(x: Tensor, p: DenseBlockParams) -> Tensor:
    branch = relu(batch_norm(conv2d(x, p.conv1), p.bn1))
    branch = batch_norm(conv2d(branch, p.conv2), p.bn2)
    return relu(concat_channels((x, branch)))


class TransitionParams:
    """1x1 strided conv + BN squeezing dense-stage channels between stages."""

    def __init__(self, conv, bn):
        self.conv = conv
        self.bn = bn

    @classmethod
    def create(cls, rng, in_ch: int, out_ch: int, stride: int, dtype=np.float32):
        return cls(
            Conv2dParams.create(rng, in_ch, out_ch, 1, stride=stride, padding=0, dtype=dtype),
            BatchNormState(out_ch, dtype=dtype),
        )


def _layer_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, zlib.crc32(name.encode("ascii"))])))


class Model:
    """A built preset: config plus its ordered, named parameter collection."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.stem_conv: Conv2dParams = None
        self.stem_bn: BatchNormState = None
        self.stages: list[list] = []
        self.transitions: list[TransitionParams] = []
        self.head: LinearParams = None

    @property
    def name(self) -> str:
        return self.config.name

    # -- structure walkers ---------------------------------------------------

    def named_modules(self):
        """(name, module) pairs in input-to-output order."""
        yield "stem", self.stem_conv
        yield "stem.bn", self.stem_bn
        for si, blocks in enumerate(self.stages, start=1):
            for bi, block in enumerate(blocks):
                prefix = f"stage{si}.block{bi}"
                yield f"{prefix}.conv1", block.conv1
                yield f"{prefix}.bn1", block.bn1
                yield f"{prefix}.conv2", block.conv2
                yield f"{prefix}.bn2", block.bn2
                if isinstance(block, ResidualBlockParams) and block.has_projection:
                    yield f"{prefix}.shortcut", block.shortcut_conv
                    yield f"{prefix}.shortcut.bn", block.shortcut_bn
            if self.config.family == "dense_concat" and si < len(self.stages):
                yield f"trans{si}", self.transitions[si - 1].conv
                yield f"trans{si}.bn", self.transitions[si - 1].bn
        yield "head", self.head

    def parameters(self) -> list[tuple[str, Tensor]]:
        """Trainable tensors, named, input-to-output ordered."""
        out = []
        for name, mod in self.named_modules():
            if isinstance(mod, Conv2dParams):
                out.append((f"{name}.weight", mod.weight))
                out.append((f"{name}.bias", mod.bias))
            elif isinstance(mod, LinearParams):
                out.append((f"{name}.weight", mod.weight))
                out.append((f"{name}.bias", mod.bias))
            elif isinstance(mod, BatchNormState):
                out.append((f"{name}.gamma", mod.gamma))
                out.append((f"{name}.beta", mod.beta))
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """Non-trainable running statistics, named."""
        out = []
        for name, mod in self.named_modules():
            if isinstance(mod, BatchNormState):
                out.append((f"{name}.running_mean", mod.running_mean))
                out.append((f"{name}.running_var", mod.running_var))
        return out

    def weighted_layers(self) -> list[tuple[str, Tensor]]:
        """Conv/linear weight tensors only, input-to-output ordered."""
        return [(name, mod.weight) for name, mod in self.named_modules()
                if isinstance(mod, (Conv2dParams, LinearParams))]

    def batch_norm_states(self) -> list[BatchNormState]:
        return [mod for _, mod in self.named_modules() if isinstance(mod, BatchNormState)]

    # -- mode ----------------------------------------------------------------

    def train(self) -> "Model":
        for bn in self.batch_norm_states():
            bn.training = True
        return self

    def eval(self) -> "Model":
        for bn in self.batch_norm_states():
            bn.training = False
        return self

    @property
    def training(self) -> bool:
        states = self.batch_norm_states()
        return states[0].training if states else False

    # -- forward -------------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        """Logits [batch, num_classes] for an input batch [batch, 3, h, w]."""
        if x.data.ndim != 4 or x.shape[1] != self.config.input_size[0]:
            raise GeometryError(
                f"model {self.name} expects [n, {self.config.input_size[0]}, h, w] input, "
                f"got shape {tuple(x.shape)}")
        out = relu(batch_norm(conv2d(x, self.stem_conv), self.stem_bn))
        family = self.config.family
        for si, blocks in enumerate(self.stages, start=1):
            for block in blocks:
                if family == "residual":
                    out = residual_block_forward(out, block)
                elif family == "plain":
                    out = plain_block_forward(out, block)
                else:
                    out = dense_block_forward(out, block)
            if family == "dense_concat" and si < len(self.stages):
                trans = self.transitions[si - 1]
                out = relu(batch_norm(conv2d(out, trans.conv), trans.bn))
        pooled = global_avg_pool(out)
        return linear(pooled, self.head)

    def clone(self) -> "Model":
        return copy.deepcopy(self)

    def zero_grads(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def __repr__(self) -> str:
        n_params = sum(p.size for _, p in self.parameters())
        return f"Model({self.name}, {n_params} params, dtype={self.dtype.name})"


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Deterministically initialize a preset; same (config, seed) -> same bits."""
    model = Model(config, dtype=dtype)
    w1, w2, w3 = config.stage_widths
    n = config.blocks_per_stage
    family = config.family

    def rng(name):
        return _layer_rng(seed, name)

    model.stem_conv = Conv2dParams.create(rng("stem"), 3, w1, 3, stride=1, padding=1, dtype=dtype)
    model.stem_bn = BatchNormState(w1, dtype=dtype)

    if family in ("residual", "plain"):
        block_cls = ResidualBlockParams if family == "residual" else PlainBlockParams
        in_ch = w1
        for si, (width, stride) in enumerate(((w1, 1), (w2, 2), (w3, 2)), start=1):
            blocks = []
            for bi in range(n):
                s = stride if bi == 0 else 1
                blocks.append(block_cls.create(
                    rng(f"stage{si}.block{bi}"), in_ch, width, stride=s, dtype=dtype))
                in_ch = width
            model.stages.append(blocks)
        head_in = w3
    else:
        in_ch = w1
        for si, width in enumerate((w1, w2, w3), start=1):
            if si > 1:
                trans = TransitionParams.create(
                    rng(f"trans{si - 1}"), in_ch, width, stride=2, dtype=dtype)
                model.transitions.append(trans)
                in_ch = width
            blocks = []
            for bi in range(n):
                blocks.append(DenseBlockParams.create(
                    rng(f"stage{si}.block{bi}"), in_ch, width, stride=1, dtype=dtype))
                in_ch += width
            model.stages.append(blocks)
        head_in = in_ch

    model.head = LinearParams.create(rng("head"), head_in, config.num_classes, dtype=dtype)
    return model


def model_size_bytes(model: Model) -> int:
    """Trainable parameter count times the element width."""
    return sum(p.size for _, p in model.parameters()) * model.dtype.itemsize


def parameter_count(model: Model) -> int:
    return sum(p.size for _, p in model.parameters())


def _snapshot_bn(model: Model):
    return [(bn, bn.running_mean.copy(), bn.running_var.copy(), bn.training)
            for bn in model.batch_norm_states()]


def _restore_bn(snapshot) -> None:
    for bn, mean, var, training in snapshot:
        bn.running_mean = mean
        bn.running_var = var
        bn.training = training


def gradient_flow_probe(model: Model, batch: Tensor, labels) -> list[tuple[str, float]]:
    """Per-layer gradient L2 norms after one forward+backward, input to output.

    Runs in train mode on a softmax cross-entropy loss; BN running buffers
    and parameter grads are restored afterwards, so probing is side-effect
    free.
    """
    snapshot = _snapshot_bn(model)
    model.train()
    model.zero_grads()
    try:
        with Tape() as tape:
            logits = model.forward(batch)
            loss, _ = softmax_cross_entropy(logits, labels)
        backward(loss, tape)
        norms = [(name, float(np.linalg.norm(weight.grad)))
                 for name, weight in model.weighted_layers()]
    finally:
        _restore_bn(snapshot)
        model.zero_grads()
    return norms


def peak_activation_bytes(model: Model, batch_shape) -> int:
    """Bytes of activations a training step retains for the backward pass.

    Accounts analytically over the recorded layer graph: a zero batch of
    ``batch_shape`` is driven through the train-mode forward and the sizes of
    the buffers each op holds for its backward rule are summed.  Parameters
    and per-channel statistics vectors are not activations and are excluded,
    so the result is exactly linear in the batch size.
    """
    snapshot = _snapshot_bn(model)
    model.train()
    try:
        # requires_grad makes every op record, parameters or not, mirroring
        # what one full backward pass keeps alive
        zeros = Tensor(np.zeros(tuple(batch_shape), dtype=model.dtype), requires_grad=True)
        with Tape() as tape:
            model.forward(zeros)
        return tape.retained_activation_bytes()
    finally:
        _restore_bn(snapshot)


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

def _named_arrays(model: Model) -> list[tuple[str, np.ndarray]]:
    arrays = [(name, p.data) for name, p in model.parameters()]
    arrays.extend(model.buffers())
    return arrays


def save_checkpoint(model: Model, path) -> None:
    """Versioned binary container: config header + named flat arrays.

    The layout is deterministic, so save -> load -> save is byte-identical.
    """
    arrays = _named_arrays(model)
    header = {
        "format_version": 1,
        "model_name": model.name,
        "dtype": model.dtype.name,
        "config": model.config.to_dict(),
        "arrays": [{"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)}
                   for name, arr in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for _, arr in arrays:
            f.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> Model:
    """Rebuild a model from a checkpoint written by ``save_checkpoint``."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint (bad magic {magic!r})")
        (header_len,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint header: {exc}") from exc
        if header.get("format_version") != 1:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}")
        config = ModelConfig.from_dict(header["config"])
        model = build_model(config, seed=0, dtype=np.dtype(header["dtype"]))
        stored = {entry["name"]: entry for entry in header["arrays"]}
        targets = dict(_named_arrays(model))
        if set(stored) != set(targets):
            missing = sorted(set(targets) - set(stored))
            extra = sorted(set(stored) - set(targets))
            raise CheckpointError(
                f"{path}: array set mismatch (missing {missing}, unexpected {extra})")
        for entry in header["arrays"]:
            name = entry["name"]
            shape = tuple(entry["shape"])
            dtype = np.dtype(entry["dtype"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
            raw = f.read(nbytes)
            if len(raw) != nbytes:
                raise CheckpointError(f"{path}: truncated array data for {name}")
            arr = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
            target = targets[name]
            if target.shape != arr.shape:
                raise CheckpointError(
                    f"{path}: shape mismatch for {name}: stored {arr.shape}, "
                    f"model {target.shape}")
            target[...] = arr
    model.eval()
    return model
