"""Multi-branch network: shared conv backbone plus attribute and landmark heads.

With attribute grouping on, the network has three heads on top of the
shared feature map:

* objective attributes:  SPP(1) -> FC -> FC(J_obj)
* subjective attributes: SPP(3) -> FC -> FC -> FC(J_subj)
* landmarks:             SPP(1) -> FC -> FC(2T)

With grouping off a single SPP(3) -> FC -> FC -> FC(J) head predicts every
attribute.  Hidden FC layers are followed by ReLU; head outputs are raw.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nn import Conv2d, FullyConnected, Layer, MaxPool2d, Param, ReLU, Sequential, ShapeError
from .spp import SpatialPyramidPool, pyramid_bins

OBJECTIVE = "objective"
SUBJECTIVE = "subjective"


@dataclass(frozen=True)
class AttributeSpec:
    names: tuple[str, ...]
    groups: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "groups", tuple(self.groups))
        if len(self.names) == 0:
            raise ValueError("AttributeSpec needs at least one attribute")
        if len(set(self.names)) != len(self.names):
            raise ValueError("attribute names must be unique")
        if len(self.groups) != len(self.names):
            raise ValueError("every attribute needs exactly one group tag")
        bad = [g for g in self.groups if g not in (OBJECTIVE, SUBJECTIVE)]
        if bad:
            raise ValueError(f"unknown group tag(s): {sorted(set(bad))}")

    @property
    def J(self) -> int:
        return len(self.names)

    def indices(self, group: str) -> list[int]:
        return [j for j, g in enumerate(self.groups) if g == group]

    @property
    def objective(self) -> list[int]:
        return self.indices(OBJECTIVE)

    @property
    def subjective(self) -> list[int]:
        return self.indices(SUBJECTIVE)

    @classmethod
    def from_pairs(cls, pairs) -> "AttributeSpec":
        names, groups = zip(*pairs)
        return cls(names, groups)


# Fig. 1 of the source reading: glasses/bangs/hat are "easy" objective cues,
# smiling/pointy nose/big lips the subjective ones.  The full 40-attribute
# split is user configuration.
DEFAULT_FACE_SPEC = AttributeSpec(
    ("Eyeglasses", "Bangs", "Wearing_Hat", "Smiling", "Pointy_Nose", "Big_Lips"),
    (OBJECTIVE, OBJECTIVE, OBJECTIVE, SUBJECTIVE, SUBJECTIVE, SUBJECTIVE),
)


@dataclass
class BackboneConfig:
    in_channels: int = 1
    channels: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    padding: int = 1
    pool: int = 2

    @property
    def out_channels(self) -> int:
        return self.channels[-1]


@dataclass
class HeadConfig:
    objective_hidden: tuple[int, ...] = (1024,)
    subjective_hidden: tuple[int, ...] = (2048, 1024)
    landmark_hidden: tuple[int, ...] = (1024,)
    objective_levels: int = 1
    subjective_levels: int = 3
    landmark_levels: int = 1

    @classmethod
    def desk(cls) -> "HeadConfig":
        return cls(objective_hidden=(64,), subjective_hidden=(128, 64), landmark_hidden=(64,))


def build_backbone(cfg: BackboneConfig, rng: np.random.Generator) -> Sequential:
    layers: list[Layer] = []
    cin = cfg.in_channels
    for cout in cfg.channels:
        layers += [Conv2d(cin, cout, cfg.kernel, 1, cfg.padding, rng=rng), ReLU(),
                   MaxPool2d(cfg.pool)]
        cin = cout
    return Sequential(layers)


class Head(Sequential):
    """SPP followed by a dense stack; ``columns`` maps outputs to attribute indices."""

    def __init__(self, name, channels, levels, hidden, out_dim, rng, columns=None):
        self.head_name = name
        self.levels = levels
        self.columns = columns
        layers: list[Layer] = [SpatialPyramidPool(levels)]
        width = channels * pyramid_bins(levels)
        self.spp_dim = width
        for h in hidden:
            layers += [FullyConnected(width, h, rng=rng), ReLU()]
            width = h
        layers.append(FullyConnected(width, out_dim, rng=rng))
        super().__init__(layers)

    @property
    def fc_layers(self) -> list[FullyConnected]:
        return [l for l in self.layers if isinstance(l, FullyConnected)]

    @property
    def out_dim(self) -> int:
        return self.fc_layers[-1].out_dim


@dataclass
class NetworkConfig:
    names: tuple[str, ...]
    groups: tuple[str, ...]
    landmarks: int
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)
    grouping: bool = True
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        raw = json.loads(text)
        backbone = raw.pop("backbone")
        heads = raw.pop("heads")
        backbone["channels"] = tuple(backbone["channels"])
        for key in ("objective_hidden", "subjective_hidden", "landmark_hidden"):
            heads[key] = tuple(heads[key])
        return cls(names=tuple(raw.pop("names")), groups=tuple(raw.pop("groups")),
                   backbone=BackboneConfig(**backbone), heads=HeadConfig(**heads), **raw)


class DmmNetwork:
    def __init__(self, config: NetworkConfig):
        self.config = config
        self.spec = AttributeSpec(config.names, config.groups)
        self.T = config.landmarks
        if self.T < 1:
            raise ValueError("landmark count T must be >= 1")
        rng = np.random.default_rng(config.seed)
        c = config.backbone.out_channels
        h = config.heads
        self.backbone = build_backbone(config.backbone, rng)
        self.heads: dict[str, Head] = {}
        if config.grouping:
            obj, subj = self.spec.objective, self.spec.subjective
            if not obj or not subj:
                raise ValueError("attribute grouping needs at least one objective and "
                                 "one subjective attribute")
            self.heads[OBJECTIVE] = Head(OBJECTIVE, c, h.objective_levels, h.objective_hidden,
                                         len(obj), rng, obj)
            self.heads[SUBJECTIVE] = Head(SUBJECTIVE, c, h.subjective_levels,
                                          h.subjective_hidden, len(subj), rng, subj)
        else:
            self.heads["attributes"] = Head("attributes", c, h.subjective_levels,
                                            h.subjective_hidden, self.spec.J, rng,
                                            list(range(self.spec.J)))
        self.heads["landmarks"] = Head("landmarks", c, h.landmark_levels, h.landmark_hidden,
                                       2 * self.T, rng)
        self._cache = None

    @property
    def attribute_heads(self) -> list[Head]:
        return [hd for hd in self.heads.values() if hd.columns is not None]

    def params(self) -> list[Param]:
        out = self.backbone.params()
        for head in self.heads.values():
            out += head.params()
        return out

    def named_params(self) -> list[tuple[str, Param]]:
        out = []
        for name, part in [("backbone", self.backbone), *self.heads.items()]:
            for i, layer in enumerate(part.layers):
                for pname, p in zip(("weight", "bias"), layer.params()):
                    out.append((f"{name}.{i}.{pname}", p))
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    # -- forward ---------------------------------------------------------

    def forward_heads(self, images: np.ndarray, heads=None) -> dict[str, np.ndarray]:
        """Raw outputs of each head (``heads`` restricts which ones run)."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        feats, bb_inputs = self.backbone.forward_with_inputs(images)
        _, _, fh, fw = feats.shape
        if fh < 1 or fw < 1:
            raise ShapeError("backbone", "feature map with H, W >= 1", feats.shape)
        outs, head_inputs = {}, {}
        for name, head in self.heads.items():
            if heads is not None and name not in heads:
                continue
            outs[name], head_inputs[name] = head.forward_with_inputs(feats)
        self._cache = (images, bb_inputs, feats, head_inputs)
        return outs

    def attribute_scores(self, outs: dict[str, np.ndarray]) -> np.ndarray:
        """Assemble the ``(N, J)`` prediction matrix in AttributeSpec order."""
        n = next(iter(outs.values())).shape[0]
        scores = np.empty((n, self.spec.J))
        for head in self.attribute_heads:
            scores[:, head.columns] = outs[head.head_name]
        return scores

    def forward(self, images, with_landmarks: bool = True):
        """Return ``(scores (N, J), landmarks (N, 2T) or None)``."""
        wanted = [h.head_name for h in self.attribute_heads]
        if with_landmarks:
            wanted.append("landmarks")
        outs = self.forward_heads(images, wanted)
        return self.attribute_scores(outs), outs.get("landmarks")

    def predict(self, images, batch_size: int = 256):
        """Forward in chunks without keeping activations for backward."""
        scores, marks = [], []
        for start in range(0, len(images), batch_size):
            s, m = self.forward(images[start:start + batch_size])
            scores.append(s)
            marks.append(m)
        self._cache = None
        return np.concatenate(scores), np.concatenate(marks)

    # -- backward --------------------------------------------------------

    def backward_heads(self, grads: dict[str, np.ndarray | None],
                       need_input_grad: bool = True) -> np.ndarray | None:
        """Backprop per-head gradients from the last forward; returns d(images).

        Heads whose gradient is ``None`` or absent contribute nothing; the
        backbone receives the sum of the remaining head contributions.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a preceding forward")
        images, bb_inputs, feats, head_inputs = self._cache
        feat_grad = np.zeros_like(feats)
        for name, g in grads.items():
            if g is None:
                continue
            if name not in head_inputs:
                raise KeyError(f"head {name!r} was not run in the last forward")
            head = self.heads[name]
            g = np.asarray(g, dtype=np.float64)
            expected = (feats.shape[0], head.out_dim)
            if g.shape != expected:
                raise ShapeError(f"head {name}", expected, g.shape)
            feat_grad += head.backward_from_inputs(head_inputs[name], g)
        return self.backbone.backward_from_inputs(bb_inputs, feat_grad, need_input_grad)

    def split_attribute_grad(self, grad_scores: np.ndarray) -> dict[str, np.ndarray]:
        return {h.head_name: grad_scores[:, h.columns] for h in self.attribute_heads}

    def backward(self, grad_scores, grad_landmarks=None, need_input_grad: bool = True):
        grads = self.split_attribute_grad(np.asarray(grad_scores, dtype=np.float64))
        grads["landmarks"] = grad_landmarks
        return self.backward_heads(grads, need_input_grad)


def build_network(spec: AttributeSpec, landmarks: int, backbone: BackboneConfig | None = None,
                  heads: HeadConfig | None = None, grouping: bool = True,
                  seed: int = 0) -> DmmNetwork:
    cfg = NetworkConfig(spec.names, spec.groups, landmarks, backbone or BackboneConfig(),
                        heads or HeadConfig(), grouping, seed)
    return DmmNetwork(cfg)


# -- checkpoints -----------------------------------------------------------

MAGIC = b"DMMCKPT\x00"
VERSION = 1


def _write_tensor(buf, arr: np.ndarray):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    buf.write(struct.pack("<I", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(arr.tobytes())


def _read_tensor(buf) -> np.ndarray:
    (ndim,) = struct.unpack("<I", buf.read(4))
    shape = struct.unpack(f"<{ndim}Q", buf.read(8 * ndim))
    count = int(np.prod(shape, dtype=np.int64))
    data = buf.read(8 * count)
    if len(data) != 8 * count:
        raise ValueError("truncated checkpoint")
    return np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)


def save_checkpoint(net: DmmNetwork, path, thresholds: np.ndarray | None = None) -> None:
    """Binary layout: magic, version, JSON header, then each parameter tensor.

    Every tensor is stored as ``ndim`` (u32), ``shape`` (u64 each) and raw
    little-endian float64 data.  Decision thresholds, when given, follow the
    parameters as one extra tensor.
    """
    header = json.loads(net.config.to_json())
    header["params"] = [name for name, _ in net.named_params()]
    header["has_thresholds"] = thresholds is not None
    raw = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(raw)))
    buf.write(raw)
    for _, p in net.named_params():
        _write_tensor(buf, p.value)
    if thresholds is not None:
        _write_tensor(buf, np.asarray(thresholds, dtype=np.float64))
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[DmmNetwork, np.ndarray | None]:
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.read(len(MAGIC)) != MAGIC:
        raise ValueError(f"{path}: not a DMM checkpoint")
    version, hlen = struct.unpack("<II", buf.read(8))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(buf.read(hlen))
    names = header.pop("params")
    has_thresholds = header.pop("has_thresholds")
    net = DmmNetwork(NetworkConfig.from_json(json.dumps(header)))
    params = net.named_params()
    if [n for n, _ in params] != names:
        raise ValueError(f"{path}: parameter layout does not match header")
    for name, p in params:
        value = _read_tensor(buf)
        if value.shape != p.value.shape:
            raise ShapeError(name, p.value.shape, value.shape)
        p.value[...] = value
    thresholds = _read_tensor(buf) if has_thresholds else None
    return net, thresholds
