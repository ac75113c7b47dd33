"""Recognition towers, the per-frame segmentation net, and stream merging.

A tower is six blocks; every block is 2D conv -> temporal conv -> optional
max pools -> context gate -> squeeze-excite, wrapped by an additive skip
connection (1x1 projection plus matching pools when shapes change). The
three feature streams share one block grammar, merge by averaging after a
configurable block, and a structurally identical tail of blocks consumes
the merged features. Each tower ends in global average pooling and a
linear classifier.
"""

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import ops
from .errors import ConfigurationError, InputError
from .repflow import FlowParams, flow_pairs
from .tenfile import read_ten, write_ten
from .tensor import Tensor, glorot_uniform, no_grad, parameter

STREAM_ORDER = ("rgb", "flow", "semantic")
STREAM_IN_CHANNELS = {"rgb": 3, "flow": 2}


# ---------------------------------------------------------------------------
# configs


@dataclass
class BlockSpec:
    out_channels: int
    spatial_kernel: int = 3
    temporal_kernel: int = 3
    spatial_pool: bool = False
    temporal_pool: bool = False
    use_context_gate: bool = True
    use_squeeze_excite: bool = True
    use_skip: bool = True
    se_reduction: int = 4
    repeats: int = 1

    def __post_init__(self):
        if self.spatial_kernel % 2 == 0 or self.temporal_kernel % 2 == 0:
            raise ConfigurationError("block kernels must be odd")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        if self.use_squeeze_excite and self.out_channels % self.se_reduction:
            raise ConfigurationError(
                f"se_reduction {self.se_reduction} must divide {self.out_channels}"
            )


@dataclass
class TowerConfig:
    blocks: list = field(default_factory=lambda: default_blocks())
    merge_after_block: int = 3

    def __post_init__(self):
        self.blocks = [
            b if isinstance(b, BlockSpec) else BlockSpec(**b) for b in self.blocks
        ]
        if len(self.blocks) != 6:
            raise ConfigurationError("a tower has exactly 6 blocks")
        if not 1 <= self.merge_after_block < 6:
            raise ConfigurationError("merge_after_block must be in [1, 6)")


@dataclass
class SegNetConfig:
    channels: tuple = (8, 16, 16, 16)
    dilations: tuple = (1, 1, 2, 4)
    output_stride: int = 4
    num_classes: int = 4

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.dilations = tuple(self.dilations)
        if len(self.channels) != len(self.dilations):
            raise ConfigurationError("segnet channels/dilations length mismatch")
        os_ = self.output_stride
        if os_ < 1 or os_ & (os_ - 1):
            raise ConfigurationError("output_stride must be a power of 2")
        if 2 ** len(self.channels) < os_:
            raise ConfigurationError("not enough stages for the output stride")


def default_blocks():
    """Desk-scale widths over six blocks; 32px inputs reach 1x1 by block 5.

    Temporal pooling halves T at blocks 2 and 4, so the last two blocks
    (T=2 for 8-frame clips) keep their temporal kernel at 1.
    """
    widths = (8, 16, 24, 32, 48, 64)
    spool = (True, True, True, True, True, False)
    tpool = (False, True, False, True, False, False)
    tkern = (3, 3, 3, 3, 1, 1)
    return [
        BlockSpec(out_channels=w, spatial_pool=s, temporal_pool=t, temporal_kernel=k)
        for w, s, t, k in zip(widths, spool, tpool, tkern)
    ]


@dataclass
class StreamOutputs:
    logits_rgb: Tensor = None
    logits_flow: Tensor = None
    logits_semantic: Tensor = None
    logits_merged: Tensor = None
    seg_logits: Tensor = None

    def logits_for(self, stream):
        return getattr(self, f"logits_{stream}")


# ---------------------------------------------------------------------------
# layers


class Conv2dLayer:
    def __init__(self, rng, in_ch, out_ch, k, stride=1, dilation=1,
                 padding="same-replicate", bias=True, dtype=np.float32, name="conv"):
        fan_in = in_ch * k * k
        fan_out = out_ch * k * k
        self.kernel = glorot_uniform(
            rng, (out_ch, in_ch, k, k), fan_in, fan_out, dtype=dtype, name=f"{name}/kernel"
        )
        self.bias = (
            parameter(np.zeros(out_ch), dtype=dtype, name=f"{name}/bias") if bias else None
        )
        self.stride = stride
        self.dilation = dilation
        self.padding = padding

    def __call__(self, x):
        out = ops.conv2d(x, self.kernel, stride=self.stride,
                         dilation=self.dilation, padding=self.padding)
        if self.bias is not None:
            out = ops.channel_bias(out, self.bias)
        return out

    def params(self):
        out = {self.kernel.name: self.kernel}
        if self.bias is not None:
            out[self.bias.name] = self.bias
        return out


class TemporalConvLayer:
    def __init__(self, rng, ch, kt, dtype=np.float32, name="tconv"):
        self.kernel = glorot_uniform(rng, (ch, kt), kt, kt, dtype=dtype, name=f"{name}/kernel")

    def __call__(self, x):
        return ops.conv1d_temporal(x, self.kernel)

    def params(self):
        return {self.kernel.name: self.kernel}


class LinearLayer:
    def __init__(self, rng, in_f, out_f, dtype=np.float32, name="linear"):
        self.w = glorot_uniform(rng, (out_f, in_f), in_f, out_f, dtype=dtype, name=f"{name}/w")
        self.b = parameter(np.zeros(out_f), dtype=dtype, name=f"{name}/b")

    def __call__(self, x):
        return ops.linear(x, self.w, self.b)

    def params(self):
        return {self.w.name: self.w, self.b.name: self.b}


class ContextGate:
    """out = x * sigmoid(affine(global_average_pool(x))), per channel."""

    def __init__(self, rng, ch, dtype=np.float32, name="cg"):
        self.affine = LinearLayer(rng, ch, ch, dtype=dtype, name=name)

    def __call__(self, x):
        gate = ops.sigmoid(self.affine(ops.global_average_pool(x)))
        return ops.channel_scale(x, gate)

    def params(self):
        return self.affine.params()


class SqueezeExcite:
    """Channel recalibration through a reduction-r bottleneck."""

    def __init__(self, rng, ch, reduction, dtype=np.float32, name="se"):
        hidden = ch // reduction
        self.fc1 = LinearLayer(rng, ch, hidden, dtype=dtype, name=f"{name}/fc1")
        self.fc2 = LinearLayer(rng, hidden, ch, dtype=dtype, name=f"{name}/fc2")

    def __call__(self, x):
        s = ops.sigmoid(self.fc2(ops.relu(self.fc1(ops.global_average_pool(x)))))
        return ops.channel_scale(x, s)

    def params(self):
        return {**self.fc1.params(), **self.fc2.params()}


def merge_streams(features):
    """Elementwise arithmetic mean of same-shaped feature tensors."""
    if not features:
        raise ConfigurationError("merge_streams needs at least one tensor")
    for f in features[1:]:
        if f.shape != features[0].shape:
            raise ConfigurationError(
                f"merge_streams: shapes {tuple(features[0].shape)} vs {tuple(f.shape)}"
            )
    total = features[0]
    for f in features[1:]:
        total = ops.add(total, f)
    return ops.scale_by_scalar(total, 1.0 / len(features))


# ---------------------------------------------------------------------------
# blocks and towers


class _BlockRepeat:
    def __init__(self, rng, in_ch, spec, pools_active, dtype, name):
        self.spec = spec
        self.pools_active = pools_active
        self.conv = Conv2dLayer(rng, in_ch, spec.out_channels, spec.spatial_kernel,
                                dtype=dtype, name=f"{name}/conv2d")
        self.tconv = TemporalConvLayer(rng, spec.out_channels, spec.temporal_kernel,
                                       dtype=dtype, name=f"{name}/tconv")
        self.cg = (
            ContextGate(rng, spec.out_channels, dtype=dtype, name=f"{name}/cg")
            if spec.use_context_gate else None
        )
        self.se = (
            SqueezeExcite(rng, spec.out_channels, spec.se_reduction, dtype=dtype,
                          name=f"{name}/se")
            if spec.use_squeeze_excite else None
        )
        self.skip_proj = None
        if spec.use_skip and in_ch != spec.out_channels:
            self.skip_proj = Conv2dLayer(rng, in_ch, spec.out_channels, 1, bias=False,
                                         dtype=dtype, name=f"{name}/skip")

    def _spatial(self, x, layer):
        N, T, C, H, W = x.shape
        flat = ops.reshape(x, (N * T, C, H, W))
        out = layer(flat)
        return ops.reshape(out, (N, T, out.shape[1], out.shape[2], out.shape[3]))

    def _pools(self, x):
        if self.spec.spatial_pool and self.pools_active:
            x = ops.max_pool2d(x)
        if self.spec.temporal_pool and self.pools_active:
            x = ops.temporal_max_pool(x)
        return x

    def __call__(self, x):
        h = self._spatial(x, self.conv)
        h = self.tconv(h)
        h = self._pools(h)
        if self.cg is not None:
            h = self.cg(h)
        if self.se is not None:
            h = self.se(h)
        if not self.spec.use_skip:
            return h
        skip = x
        if self.skip_proj is not None:
            skip = self._spatial(skip, self.skip_proj)
        skip = self._pools(skip)
        return ops.add(h, skip)

    def params(self):
        out = {**self.conv.params(), **self.tconv.params()}
        for sub in (self.cg, self.se, self.skip_proj):
            if sub is not None:
                out.update(sub.params())
        return out


class Block:
    """One tower stage: the spec repeated `repeats` times.

    Pooling (and the matching skip pooling) happens on the first repeat
    only; later repeats keep channels and resolution.
    """

    def __init__(self, rng, in_ch, spec, dtype=np.float32, name="block",
                 suppress_spatial_pool=False):
        self.spec = spec
        self.suppress_spatial_pool = suppress_spatial_pool
        rep_spec = spec
        if suppress_spatial_pool:
            rep_spec = BlockSpec(**{**asdict(spec), "spatial_pool": False})
        self.repeats = []
        ch = in_ch
        for r in range(spec.repeats):
            self.repeats.append(
                _BlockRepeat(rng, ch, rep_spec, r == 0, dtype, f"{name}/rep{r}")
            )
            ch = spec.out_channels

    def __call__(self, x):
        for rep in self.repeats:
            x = rep(x)
        return x

    def params(self):
        out = {}
        for rep in self.repeats:
            out.update(rep.params())
        return out


class Tower:
    def __init__(self, rng, in_ch, cfg, dtype=np.float32, name="tower",
                 drop_spatial_pools=0, start_block=0):
        self.cfg = cfg
        self.blocks = []
        ch = in_ch
        dropped = 0
        for i in range(start_block, 6):
            spec = cfg.blocks[i]
            suppress = False
            if dropped < drop_spatial_pools and spec.spatial_pool:
                suppress = True
                dropped += 1
            self.blocks.append(
                Block(rng, ch, spec, dtype=dtype, name=f"{name}/block{i + 1}",
                      suppress_spatial_pool=suppress)
            )
            ch = spec.out_channels
        if dropped < drop_spatial_pools:
            raise ConfigurationError(
                "not enough spatial pools in the tower to absorb the input stride"
            )
        self.start_block = start_block

    def forward_range(self, x, start, stop):
        """Run blocks with global indices [start, stop)."""
        for i in range(start - self.start_block, stop - self.start_block):
            x = self.blocks[i](x)
        return x

    def params(self):
        out = {}
        for b in self.blocks:
            out.update(b.params())
        return out


class SegNet:
    """Per-frame dilated segmentation net emitting pre-softmax logits.

    Stages are 3x3 convs with ReLU; the first log2(output_stride) stages
    use stride 2, later stages dilate instead of shrinking. A final 3x3
    conv maps to class logits at input_size / output_stride.
    """

    def __init__(self, rng, cfg, in_ch=3, dtype=np.float32, name="segnet"):
        self.cfg = cfg
        n_strided = int(np.log2(cfg.output_stride))
        self.stages = []
        ch = in_ch
        for i, (out_ch, dil) in enumerate(zip(cfg.channels, cfg.dilations)):
            stride = 2 if i < n_strided else 1
            self.stages.append(
                Conv2dLayer(rng, ch, out_ch, 3, stride=stride, dilation=dil,
                            dtype=dtype, name=f"{name}/stage{i}")
            )
            ch = out_ch
        self.classifier = Conv2dLayer(rng, ch, cfg.num_classes, 3, dtype=dtype,
                                      name=f"{name}/classifier")

    def __call__(self, frames):
        h = frames
        for stage in self.stages:
            h = ops.relu(stage(h))
        return self.classifier(h)

    def params(self):
        out = {}
        for stage in self.stages:
            out.update(stage.params())
        out.update(self.classifier.params())
        return out


class Head:
    """Global average pool over (T, H, W) then linear to class logits."""

    def __init__(self, rng, in_ch, k_action, dtype=np.float32, name="head"):
        self.fc = LinearLayer(rng, in_ch, k_action, dtype=dtype, name=name)

    def __call__(self, feats):
        return self.fc(ops.global_average_pool(feats))

    def params(self):
        return self.fc.params()


# ---------------------------------------------------------------------------
# the full model


class ActionModel:
    """Multi-stream recognition model; merged-stream logits drive inference.

    streams must include "rgb"; the merged tower exists iff 2+ streams. In
    single-stream runs the merged output aliases the RGB tower output.
    """

    def __init__(self, streams=("rgb", "flow", "semantic"), tower_cfg=None,
                 segnet_cfg=None, flow_params=None, k_action=8,
                 frame_shape=(8, 32, 32), seed=0, dtype=np.float32):
        streams = tuple(s for s in STREAM_ORDER if s in streams)
        if "rgb" not in streams:
            raise ConfigurationError("streams must include rgb")
        unknown = set(streams) - set(STREAM_ORDER)
        if unknown:
            raise ConfigurationError(f"unknown streams: {sorted(unknown)}")
        self.streams = streams
        self.tower_cfg = tower_cfg or TowerConfig()
        self.segnet_cfg = segnet_cfg or SegNetConfig()
        self.k_action = int(k_action)
        self.frame_shape = tuple(frame_shape)
        self.dtype = dtype
        self.seed = int(seed)

        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        merge = self.tower_cfg.merge_after_block
        self.merge_after_block = merge

        self.segnet = None
        self.flow_params = None
        self.towers = {}
        self.heads = {}
        drop = {"rgb": 0, "flow": 0,
                "semantic": int(np.log2(self.segnet_cfg.output_stride))}
        for stream in streams:
            if stream == "semantic":
                self.segnet = SegNet(rng, self.segnet_cfg, dtype=dtype)
                in_ch = self.segnet_cfg.num_classes
            elif stream == "flow":
                self.flow_params = flow_params or FlowParams(dtype=dtype)
                in_ch = STREAM_IN_CHANNELS["flow"]
            else:
                in_ch = STREAM_IN_CHANNELS["rgb"]
            self.towers[stream] = Tower(rng, in_ch, self.tower_cfg, dtype=dtype,
                                        name=f"{stream}", drop_spatial_pools=drop[stream])
            self.heads[stream] = Head(rng, self.tower_cfg.blocks[-1].out_channels,
                                      self.k_action, dtype=dtype, name=f"{stream}/head")

        self.merged_tower = None
        self.merged_head = None
        if len(streams) >= 2:
            merged_in = self.tower_cfg.blocks[merge - 1].out_channels
            self.merged_tower = Tower(rng, merged_in, self.tower_cfg, dtype=dtype,
                                      name="merged", start_block=merge)
            self.merged_head = Head(rng, self.tower_cfg.blocks[-1].out_channels,
                                    self.k_action, dtype=dtype, name="merged/head")

        self._merge_shapes = self._check_merge_shapes()

    # -- shape bookkeeping ---------------------------------------------------

    def _stream_shape_trace(self, stream):
        """(T, C, H, W) after each block for a unit batch of this stream."""
        T, H, W = self.frame_shape
        if stream == "semantic":
            H //= self.segnet_cfg.output_stride
            W //= self.segnet_cfg.output_stride
            C = self.segnet_cfg.num_classes
        else:
            C = STREAM_IN_CHANNELS[stream]
        trace = []
        tower = self.towers[stream]
        for block in tower.blocks:
            spec = block.spec
            if spec.spatial_pool and not block.suppress_spatial_pool:
                if H % 2 or W % 2:
                    raise ConfigurationError(
                        f"{stream}: spatial pool on odd size {H}x{W}"
                    )
                H //= 2
                W //= 2
            if spec.temporal_pool:
                if T % 2:
                    raise ConfigurationError(f"{stream}: temporal pool on odd T={T}")
                T //= 2
            C = spec.out_channels
            trace.append((T, C, H, W))
        return trace

    def _check_merge_shapes(self):
        """All feature streams must agree on the merge-point feature shape."""
        merge = self.merge_after_block
        shapes = {s: self._stream_shape_trace(s)[merge - 1] for s in self.streams}
        if len(set(shapes.values())) > 1:
            raise ConfigurationError(f"block-{merge} shapes differ across streams: {shapes}")
        return shapes

    # -- forward -------------------------------------------------------------

    def parameters(self):
        out = {}
        if self.segnet is not None:
            out.update(self.segnet.params())
        if self.flow_params is not None:
            out.update(self.flow_params.parameters())
        for stream in self.streams:
            out.update(self.towers[stream].params())
            out.update(self.heads[stream].params())
        if self.merged_tower is not None:
            out.update(self.merged_tower.params())
            out.update(self.merged_head.params())
        return out

    def _flow_input(self, frames, gate):
        """[N, T, 2, H, W] flow stack: per-pair TV-L1, last pair repeated."""
        N, T, C, H, W = frames.shape
        if T < 2:
            raise InputError("flow stream needs at least 2 frames")

        def build():
            gray = ops.channel_mean(frames)
            i0 = ops.reshape(ops.take_slice(gray, 1, 0, T - 1), (N * (T - 1), 1, H, W))
            i1 = ops.reshape(ops.take_slice(gray, 1, 1, T), (N * (T - 1), 1, H, W))
            u = flow_pairs(i0, i1, self.flow_params)
            u5 = ops.reshape(u, (N, T - 1, 2, H, W))
            last = ops.take_slice(u5, 1, T - 2, T - 1)
            return ops.concat([u5, last], axis=1)

        if gate == "stop":
            # no gradient can reach the flow computation when gated, so skip
            # recording it entirely; stop_gradient below keeps the contract
            with no_grad():
                stack = build()
            return ops.stop_gradient(stack)
        return build()

    def forward(self, frames, mode="train", gate="propagate"):
        """Run all active streams; see StreamOutputs for the result fields.

        In infer mode the result is a pure function of the RGB pixels.
        """
        if gate not in ("propagate", "stop"):
            raise ConfigurationError(f"unknown gradient gate mode {gate!r}")
        if not isinstance(frames, Tensor):
            frames = Tensor(np.asarray(frames, dtype=self.dtype))
        if frames.ndim != 5:
            raise InputError("model input must be [N, T, C, H, W]")
        N, T, C, H, W = frames.shape
        merge = self.merge_after_block

        outputs = StreamOutputs()
        feats = {}
        for stream in self.streams:
            if stream == "semantic":
                flat = ops.reshape(frames, (N * T, C, H, W))
                seg_logits = self.segnet(flat)
                outputs.seg_logits = seg_logits
                tower_in = ops.stop_gradient(seg_logits) if gate == "stop" else seg_logits
                _, K, h, w = tower_in.shape
                x = ops.reshape(tower_in, (N, T, K, h, w))
            elif stream == "flow":
                x = self._flow_input(frames, gate)
            else:
                x = frames
            feats[stream] = self.towers[stream].forward_range(x, 0, merge)

        for stream in self.streams:
            tail = self.towers[stream].forward_range(feats[stream], merge, 6)
            setattr(outputs, f"logits_{stream}", self.heads[stream](tail))

        if self.merged_tower is not None:
            merged = merge_streams([feats[s] for s in self.streams])
            tail = self.merged_tower.forward_range(merged, merge, 6)
            outputs.logits_merged = self.merged_head(tail)
        else:
            outputs.logits_merged = outputs.logits_rgb
        return outputs

    # -- persistence ----------------------------------------------------------

    def checkpoint_tensors(self):
        tensors = dict(self.parameters())
        if self.flow_params is not None:
            tensors.update(self.flow_params.all_tensors())
        return tensors

    def config_dict(self):
        cfg = {
            "streams": list(self.streams),
            "k_action": self.k_action,
            "frame_shape": list(self.frame_shape),
            "seed": self.seed,
            "dtype": "f64" if self.dtype == np.float64 else "f32",
            "tower": {
                "merge_after_block": self.tower_cfg.merge_after_block,
                "blocks": [asdict(b) for b in self.tower_cfg.blocks],
            },
            "segnet": asdict(self.segnet_cfg),
        }
        if self.flow_params is not None:
            fp = self.flow_params
            cfg["flow"] = {
                "n_iterations": fp.n_iterations,
                "learnable": sorted(fp.parameters()),
            }
        return cfg


def build_model_from_config(cfg, flow_defaults=None):
    """Rebuild an ActionModel from config_dict() output (fresh init)."""
    tower_cfg = TowerConfig(
        blocks=[BlockSpec(**b) for b in cfg["tower"]["blocks"]],
        merge_after_block=cfg["tower"]["merge_after_block"],
    )
    segnet_cfg = SegNetConfig(**cfg["segnet"])
    dtype = np.float64 if cfg.get("dtype") == "f64" else np.float32
    flow_params = None
    if "flow" in cfg and "flow" in cfg["streams"]:
        defaults = flow_defaults or {}
        flow_params = FlowParams(
            n_iterations=cfg["flow"]["n_iterations"], dtype=dtype, **defaults
        )
    return ActionModel(
        streams=tuple(cfg["streams"]),
        tower_cfg=tower_cfg,
        segnet_cfg=segnet_cfg,
        flow_params=flow_params,
        k_action=cfg["k_action"],
        frame_shape=tuple(cfg["frame_shape"]),
        seed=cfg.get("seed", 0),
        dtype=dtype,
    )


def save_checkpoint(model, out_dir):
    """Write one .ten per named parameter plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name, t in model.checkpoint_tensors().items():
        fname = name.replace("/", "__") + ".ten"
        write_ten(os.path.join(out_dir, fname), t.data)
        files[name] = fname
    manifest = {"params": files, "config": model.config_dict()}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_checkpoint(ckpt_dir):
    """Rebuild the model and restore every parameter tensor."""
    path = os.path.join(ckpt_dir, "manifest.json")
    if not os.path.exists(path):
        raise InputError(f"no checkpoint manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    model = build_model_from_config(manifest["config"])
    tensors = model.checkpoint_tensors()
    for name, fname in manifest["params"].items():
        if name not in tensors:
            raise InputError(f"checkpoint parameter {name} not present in model")
        values = read_ten(os.path.join(ckpt_dir, fname))
        if tuple(values.shape) != tuple(tensors[name].shape):
            raise InputError(f"checkpoint shape mismatch for {name}")
        tensors[name].data = values.astype(tensors[name].dtype)
    return model


# ---------------------------------------------------------------------------
# analytic cost model


def estimate_flops(model):
    """Rough per-frame forward FLOPs, broken down by component.

    Convolutions and linears count 2 * MACs; gates count their pooled
    affines plus the rescale; the flow layer counts its per-iteration
    stencils and elementwise traffic.
    """
    T, H, W = model.frame_shape
    breakdown = {}

    def tower_cost(stream_or_merged, start_block=0):
        if stream_or_merged == "merged":
            tower = model.merged_tower
            merge = model.merge_after_block
            t, c, h, w = model._merge_shapes[model.streams[0]]
            trace_iter = enumerate(tower.blocks, start=merge)
        else:
            tower = model.towers[stream_or_merged]
            t, h, w = model.frame_shape
            if stream_or_merged == "semantic":
                h //= model.segnet_cfg.output_stride
                w //= model.segnet_cfg.output_stride
                c = model.segnet_cfg.num_classes
            else:
                c = STREAM_IN_CHANNELS[stream_or_merged]
            trace_iter = enumerate(tower.blocks)
        total = 0.0
        for _, block in trace_iter:
            spec = block.spec
            for rep_i, rep in enumerate(block.repeats):
                in_c = c if rep_i == 0 else spec.out_channels
                k = spec.spatial_kernel
                total += 2.0 * t * h * w * spec.out_channels * in_c * k * k
                if rep.skip_proj is not None:
                    total += 2.0 * t * h * w * spec.out_channels * in_c
                if rep_i == 0:
                    if spec.spatial_pool and not block.suppress_spatial_pool:
                        h //= 2
                        w //= 2
                    if spec.temporal_pool:
                        t //= 2
                total += 2.0 * t * h * w * spec.out_channels * spec.temporal_kernel
                cc = spec.out_channels
                if spec.use_context_gate:
                    total += 2.0 * cc * cc + t * h * w * cc
                if spec.use_squeeze_excite:
                    total += 4.0 * cc * (cc // spec.se_reduction) + t * h * w * cc
            c = spec.out_channels
        return total

    for stream in model.streams:
        breakdown[f"tower/{stream}"] = tower_cost(stream)
    if model.merged_tower is not None:
        breakdown["tower/merged"] = tower_cost("merged")
    if model.segnet is not None:
        h, w, c = H, W, 3
        n_strided = int(np.log2(model.segnet_cfg.output_stride))
        total = 0.0
        for i, (out_c, _) in enumerate(
            zip(model.segnet_cfg.channels, model.segnet_cfg.dilations)
        ):
            if i < n_strided:
                h //= 2
                w //= 2
            total += 2.0 * T * h * w * out_c * c * 9
            c = out_c
        total += 2.0 * T * h * w * model.segnet_cfg.num_classes * c * 9
        breakdown["segnet"] = total
    if model.flow_params is not None:
        per_iter = (T - 1) * H * W * (4 * 6 + 30)  # four 3-tap stencils + pointwise
        breakdown["flow"] = float(model.flow_params.n_iterations * per_iter)
    heads = len(model.streams) + (1 if model.merged_head else 0)
    breakdown["heads"] = 2.0 * heads * model.tower_cfg.blocks[-1].out_channels * model.k_action

    per_frame = {k: v / T for k, v in breakdown.items()}
    per_frame["total"] = sum(per_frame.values())
    return per_frame
