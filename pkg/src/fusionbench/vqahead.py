"""VQA answer head: modality projections, fusion, classifier; plus parameter accounting.

Layout of the head (row vectors, weights stored [in, out])::

    x_q = txt @ proj_txt.weight + proj_txt.bias      (skipped for MUTAN or project=False)
    x_v = img @ proj_img.weight + proj_img.bias
    f   = fuse(x_q, x_v)
    hid = tanh(f @ hidden.weight + hidden.bias)      hidden.weight plays MUTAN's W_o
    out = hid @ output.weight + output.bias

MUTAN replaces the projections with its own ``W_q``/``W_v`` acting on the raw
features.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import formats
from .errors import ConfigurationError, DimensionError, ValidationError
from .fusion import (
    FusionKind,
    McbConfig,
    MutanParams,
    fuse,
    fusion_vjp,
    init_mutan,
)
from .numtensor import as_tensor
from .sketch import make_sketch_pair


@dataclass(frozen=True)
class ModelSpec:
    n_img: int
    n_txt: int
    proj: int | None
    fusion: FusionKind
    hidden: int
    classes: int
    project: bool = True
    d: int | None = None
    mode: str = "auto"
    normalize: bool = False
    t_q: int | None = None
    t_v: int | None = None
    t_o: int | None = None
    rank: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "fusion", FusionKind.parse(self.fusion))
        self.validate()

    def validate(self):
        def need(name):
            val = getattr(self, name)
            if val is None or int(val) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {val}")

        for name in ("n_img", "n_txt", "hidden", "classes"):
            need(name)
        if self.fusion is FusionKind.MUTAN:
            for name in ("t_q", "t_v", "t_o", "rank"):
                need(name)
            return
        if self.project:
            need("proj")
        elif self.n_img != self.n_txt:
            raise ConfigurationError(
                f"without projections {self.fusion.value} fusion needs n_img == n_txt, "
                f"got n_img={self.n_img}, n_txt={self.n_txt}"
            )
        if self.fusion is FusionKind.MCB:
            need("d")

    @property
    def uses_projection(self):
        return self.fusion is not FusionKind.MUTAN and self.project

    @property
    def fusion_in(self):
        """Per-modality fusion input width (MUTAN: raw feature widths)."""
        if self.fusion is FusionKind.MUTAN:
            return None
        return self.proj if self.project else self.n_txt

    @property
    def fusion_out(self):
        if self.fusion is FusionKind.ELEMENTWISE:
            return self.fusion_in
        if self.fusion is FusionKind.MCB:
            return self.d
        return self.t_o

    def to_meta(self):
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, FusionKind):
                val = val.value
            out[f.name] = "none" if val is None else str(val).lower() if isinstance(val, bool) else str(val)
        return out

    @classmethod
    def from_meta(cls, meta):
        kw = {}
        for f in fields(cls):
            if f.name not in meta:
                raise ValidationError(f"manifest lacks spec field {f.name!r}")
            raw = meta[f.name]
            if f.name in ("fusion", "mode"):
                kw[f.name] = raw
            elif f.name in ("project", "normalize"):
                if raw not in ("true", "false"):
                    raise ValidationError(f"spec field {f.name} must be true/false, got {raw!r}")
                kw[f.name] = raw == "true"
            else:
                try:
                    kw[f.name] = None if raw == "none" else int(raw)
                except ValueError:
                    raise ValidationError(f"spec field {f.name} must be an integer, got {raw!r}") from None
        try:
            return cls(**kw)
        except (ConfigurationError, ValueError) as exc:
            raise ValidationError(f"manifest spec is invalid: {exc}") from None


def param_shapes(spec):
    """Ordered ``name -> shape`` of every learned tensor."""
    shapes = {}
    if spec.uses_projection:
        shapes["proj_txt.weight"] = (spec.n_txt, spec.proj)
        shapes["proj_txt.bias"] = (spec.proj,)
        shapes["proj_img.weight"] = (spec.n_img, spec.proj)
        shapes["proj_img.bias"] = (spec.proj,)
    if spec.fusion is FusionKind.MUTAN:
        shapes["fusion.W_q"] = (spec.n_txt, spec.t_q)
        shapes["fusion.b_q"] = (spec.t_q,)
        shapes["fusion.W_v"] = (spec.n_img, spec.t_v)
        shapes["fusion.b_v"] = (spec.t_v,)
        shapes["fusion.M"] = (spec.rank, spec.t_q, spec.t_o)
        shapes["fusion.N"] = (spec.rank, spec.t_v, spec.t_o)
    shapes["hidden.weight"] = (spec.fusion_out, spec.hidden)
    shapes["hidden.bias"] = (spec.hidden,)
    shapes["output.weight"] = (spec.hidden, spec.classes)
    shapes["output.bias"] = (spec.classes,)
    return shapes


@dataclass(frozen=True)
class ParamBreakdown:
    blocks: dict
    total: int

    def __post_init__(self):
        if sum(self.blocks.values()) != self.total:
            raise ValueError("breakdown total does not equal the sum of its blocks")

    def rows(self):
        return [*self.blocks.items(), ("total", self.total)]

    def to_csv(self):
        return formats.csv_text(["block", "count"], self.rows())


def count_params(spec, strict=False):
    """Exact learned-scalar count per tensor.

    ``strict`` leaves out the MUTAN projection biases, for comparison with
    bias-free formulations.
    """
    blocks = {}
    for name, shape in param_shapes(spec).items():
        if strict and name in ("fusion.b_q", "fusion.b_v"):
            continue
        blocks[name] = int(np.prod(shape, dtype=np.int64))
    return ParamBreakdown(blocks=blocks, total=sum(blocks.values()))


@dataclass
class ModelParams:
    spec: ModelSpec
    tensors: dict
    seed: int
    mcb: McbConfig | None = None

    @property
    def mutan(self):
        t = self.tensors
        return MutanParams(W_q=t["fusion.W_q"], b_q=t["fusion.b_q"], W_v=t["fusion.W_v"],
                           b_v=t["fusion.b_v"], M=t["fusion.M"], N=t["fusion.N"])

    @property
    def fusion_params(self):
        if self.spec.fusion is FusionKind.MCB:
            return self.mcb
        if self.spec.fusion is FusionKind.MUTAN:
            return self.mutan
        return None

    def num_scalars(self):
        return sum(int(a.size) for a in self.tensors.values())

    def copy(self):
        return ModelParams(spec=self.spec, tensors={k: a.copy() for k, a in self.tensors.items()},
                           seed=self.seed, mcb=self.mcb)


def build_model(spec, rng):
    """Gaussian weights (sigma = 1/sqrt(fan-in)), zero biases, drawn from ``rng``
    in :func:`param_shapes` order. MCB sketches use seeds ``rng.seed + 1`` and
    ``rng.seed + 2`` so they never share a stream with the weights."""
    spec.validate()
    seed = rng.seed
    shapes = param_shapes(spec)
    tensors = {}
    mutan = None
    for name, shape in shapes.items():
        if name.startswith("fusion."):
            if mutan is None:
                mutan = init_mutan(rng, spec.n_txt, spec.n_img, spec.t_q, spec.t_v, spec.t_o, spec.rank)
                for key, arr in mutan.as_dict().items():
                    tensors["fusion." + key] = arr
            continue
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.gaussian(int(np.prod(shape)), 1.0 / np.sqrt(shape[0])).reshape(shape)
    mcb = None
    if spec.fusion is FusionKind.MCB:
        spec_q, spec_v = make_sketch_pair(spec.fusion_in, spec.d, seed + 1)
        mcb = McbConfig(n=spec.fusion_in, d=spec.d, spec_q=spec_q, spec_v=spec_v,
                        normalize=spec.normalize, mode=spec.mode)
    return ModelParams(spec=spec, tensors=tensors, seed=seed, mcb=mcb)


def _inputs(params, img, txt):
    spec = params.spec
    img = as_tensor(img)
    txt = as_tensor(txt)
    if img.shape[-1:] != (spec.n_img,) or txt.shape[-1:] != (spec.n_txt,):
        raise DimensionError(f"features {img.shape} / {txt.shape} do not match n_img={spec.n_img}, n_txt={spec.n_txt}")
    if img.shape[:-1] != txt.shape[:-1]:
        raise DimensionError(f"image batch {img.shape[:-1]} differs from question batch {txt.shape[:-1]}")
    if not (np.all(np.isfinite(img)) and np.all(np.isfinite(txt))):
        raise ValidationError("non-finite feature values")
    return img, txt


def _forward(params, img, txt):
    t = params.tensors
    if params.spec.uses_projection:
        xq = txt @ t["proj_txt.weight"] + t["proj_txt.bias"]
        xv = img @ t["proj_img.weight"] + t["proj_img.bias"]
    else:
        xq, xv = txt, img
    f = fuse(params.spec.fusion, params.fusion_params, xq, xv)
    hid = np.tanh(f @ t["hidden.weight"] + t["hidden.bias"])
    logits = hid @ t["output.weight"] + t["output.bias"]
    return xq, xv, f, hid, logits


def forward(params, img_feat, txt_feat):
    """Answer logits for one sample or a batch."""
    img, txt = _inputs(params, img_feat, txt_feat)
    return _forward(params, img, txt)[-1]


def log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean cross-entropy with max-subtracted log-sum-exp."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    lp = log_softmax(logits)
    return float(-lp[np.arange(len(labels)), labels].mean())


def loss_and_grads(params, img_feat, txt_feat, labels):
    """Mean cross-entropy over the batch and its gradient for every tensor."""
    img, txt = _inputs(params, img_feat, txt_feat)
    img = np.atleast_2d(img)
    txt = np.atleast_2d(txt)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    spec = params.spec
    t = params.tensors
    xq, xv, f, hid, logits = _forward(params, img, txt)
    B = logits.shape[0]
    lp = log_softmax(logits)
    loss = float(-lp[np.arange(B), labels].mean())

    dlogits = np.exp(lp)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    g = {
        "output.weight": hid.T @ dlogits,
        "output.bias": dlogits.sum(axis=0),
    }
    da = (dlogits @ t["output.weight"].T) * (1.0 - hid * hid)
    g["hidden.weight"] = f.T @ da
    g["hidden.bias"] = da.sum(axis=0)
    df = da @ t["hidden.weight"].T
    gxq, gxv, gfus = fusion_vjp(spec.fusion, params.fusion_params, xq, xv, df)
    for key, val in gfus.items():
        g["fusion." + key] = val
    if spec.uses_projection:
        g["proj_txt.weight"] = txt.T @ gxq
        g["proj_txt.bias"] = gxq.sum(axis=0)
        g["proj_img.weight"] = img.T @ gxv
        g["proj_img.bias"] = gxv.sum(axis=0)
    return loss, {name: g[name] for name in t}


def save_model(params, path):
    meta = {"kind": "checkpoint", "seed": str(params.seed)}
    meta.update({f"spec.{k}": v for k, v in params.spec.to_meta().items()})
    sketches = {}
    if params.mcb is not None:
        sketches = {"q": params.mcb.spec_q, "v": params.mcb.spec_v}
    formats.save(formats.Container(meta=meta, tensors=params.tensors, sketches=sketches), path)


def load_model(path):
    c = formats.load(path)
    if c.meta.get("kind") != "checkpoint":
        raise ValidationError(f"{path}: not a model checkpoint")
    spec = ModelSpec.from_meta({k[5:]: v for k, v in c.meta.items() if k.startswith("spec.")})
    try:
        seed = int(c.meta["seed"])
    except (KeyError, ValueError):
        raise ValidationError(f"{path}: manifest seed missing or invalid") from None
    shapes = param_shapes(spec)
    if list(c.tensors) != list(shapes):
        raise ValidationError(f"{path}: tensors {list(c.tensors)} do not match spec blocks {list(shapes)}")
    for name, shape in shapes.items():
        if c.tensors[name].shape != tuple(shape):
            raise ValidationError(f"{path}: tensor {name} has shape {c.tensors[name].shape}, spec implies {tuple(shape)}")
    mcb = None
    if spec.fusion is FusionKind.MCB:
        if set(c.sketches) != {"q", "v"}:
            raise ValidationError(f"{path}: MCB checkpoint needs sketches 'q' and 'v'")
        try:
            mcb = McbConfig(n=spec.fusion_in, d=spec.d, spec_q=c.sketches["q"], spec_v=c.sketches["v"],
                            normalize=spec.normalize, mode=spec.mode)
        except DimensionError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    elif c.sketches:
        raise ValidationError(f"{path}: unexpected sketches in a {spec.fusion.value} checkpoint")
    return ModelParams(spec=spec, tensors=dict(c.tensors), seed=seed, mcb=mcb)


def spec_dict(spec):
    d = asdict(spec)
    d["fusion"] = spec.fusion.value
    return d

