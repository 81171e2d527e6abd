//! Declarative architecture descriptions.
//!
//! An [`ArchSpec`] is used twice: to build executable networks and to expand
//! into a flat list of [`PlacedLayer`]s for analytic cost accounting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{A3dError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv3d,
    Pool3d,
    Fc,
    Bn,
    FusionConv,
}

/// One layer as seen by the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default = "unit3")]
    pub kernel: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "unit3")]
    pub stride: [usize; 3],
    #[serde(default)]
    pub width_scalable_in: bool,
    #[serde(default)]
    pub width_scalable_out: bool,
    /// Trailing input channels that are never slimmed (lateral Fast features).
    #[serde(default)]
    pub fixed_in_tail: usize,
    #[serde(default)]
    pub bias: bool,
}

fn unit3() -> [usize; 3] {
    [1, 1, 1]
}

impl LayerSpec {
    pub fn conv(kernel: [usize; 3], ci: usize, co: usize, stride: [usize; 3], scalable: bool) -> Self {
        Self {
            kind: LayerKind::Conv3d,
            kernel,
            in_channels: ci,
            out_channels: co,
            stride,
            width_scalable_in: scalable,
            width_scalable_out: scalable,
            fixed_in_tail: 0,
            bias: false,
        }
    }

    pub fn bn(channels: usize, scalable: bool) -> Self {
        Self {
            kind: LayerKind::Bn,
            kernel: unit3(),
            in_channels: channels,
            out_channels: channels,
            stride: unit3(),
            width_scalable_in: scalable,
            width_scalable_out: scalable,
            fixed_in_tail: 0,
            bias: false,
        }
    }

    /// Active input channels at width factor `gamma_w`.
    pub fn active_in(&self, gamma_w: f64) -> usize {
        let base = self.in_channels - self.fixed_in_tail;
        let scaled = if self.width_scalable_in {
            super::width(base, gamma_w)
        } else {
            base
        };
        scaled + self.fixed_in_tail
    }

    /// Active output channels at width factor `gamma_w`.
    pub fn active_out(&self, gamma_w: f64) -> usize {
        if self.width_scalable_out {
            super::width(self.out_channels, gamma_w)
        } else {
            self.out_channels
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kernel.iter().chain(self.stride.iter()).any(|&k| k == 0) {
            return Err(A3dError::InvalidArch(format!(
                "kernel and stride components must be >= 1 ({self:?})"
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(A3dError::InvalidArch("channel counts must be >= 1".into()));
        }
        if self.fixed_in_tail >= self.in_channels {
            return Err(A3dError::InvalidArch(format!(
                "fixed input tail {} leaves no slimmable channels of {}",
                self.fixed_in_tail, self.in_channels
            )));
        }
        Ok(())
    }
}

/// A layer with its full-configuration output shape `(T, H, W)` and pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub out_shape: [usize; 3],
    pub pathway: usize,
    /// Whether the spatial/temporal factors of a configuration apply to this layer.
    pub resolution_scaled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemSpec {
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    #[serde(default)]
    pub pool: Option<PoolSpec>,
}

/// A residual stage. Bottleneck blocks are `kt×1² → 1×3² → 1×1²`; basic blocks
/// are `kt×3² → 1×3²`. The spatial stride sits on the first 3×3 convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    #[serde(default)]
    pub inner_channels: usize,
    pub out_channels: usize,
    pub temporal_kernel: usize,
    pub spatial_stride: usize,
    #[serde(default)]
    pub bottleneck: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathwayBody {
    Residual(ResidualSpec),
    /// Plain layer list (cost-model only).
    Layers(Vec<LayerSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwaySpec {
    pub name: String,
    /// Adaptive pathways follow the configuration; fixed ones always run at γ = 1.
    pub adaptive: bool,
    /// Input frames relative to `base_frames` (α for a Fast pathway, 1 otherwise).
    #[serde(default = "one")]
    pub frame_ratio: usize,
    pub body: PathwayBody,
}

fn one() -> usize {
    1
}

/// Full architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    pub pathways: Vec<PathwaySpec>,
    /// Boundaries after which Fast features are fused into the Slow pathway:
    /// 0 is the stem, `i` is the end of stage `i` (1-based).
    #[serde(default)]
    pub fusion_points: Vec<usize>,
    #[serde(default = "one")]
    pub alpha: usize,
    #[serde(default)]
    pub beta: f64,
    pub base_spatial: usize,
    pub base_frames: usize,
    #[serde(default = "one")]
    pub base_stride: usize,
    pub num_classes: usize,
    /// Whether the classifier head is part of the network (cost and params).
    #[serde(default = "yes")]
    pub head: bool,
}

fn yes() -> bool {
    true
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

fn propagate(shape: [usize; 3], stride: [usize; 3]) -> [usize; 3] {
    [
        ceil_div(shape[0], stride[0]),
        ceil_div(shape[1], stride[1]),
        ceil_div(shape[2], stride[2]),
    ]
}

impl ArchSpec {
    pub fn is_two_pathway(&self) -> bool {
        self.pathways.len() == 2
    }

    pub fn slow(&self) -> &PathwaySpec {
        &self.pathways[0]
    }

    pub fn fast(&self) -> Option<&PathwaySpec> {
        self.pathways.get(1)
    }

    /// Frames of the full clip fed to the network (the Fast pathway's count for two pathways).
    pub fn input_frames(&self) -> usize {
        self.pathways
            .iter()
            .map(|p| p.frame_ratio * self.base_frames)
            .max()
            .unwrap_or(self.base_frames)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ArchSpec = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Resolves a preset name or, failing that, a path to an architecture file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(p) = Self::preset(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path);
        }
        Err(A3dError::InvalidArch(format!(
            "unknown preset '{name_or_path}' (known: {})",
            Self::PRESETS.join(", ")
        )))
    }

    pub const PRESETS: [&'static str; 4] =
        ["slow8x8_r50", "slowfast4x16_r50", "toy_slow", "toy_slowfast"];

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "slow8x8_r50" | "Slow-8x8-R50" => Some(Self::slow8x8_r50()),
            "slowfast4x16_r50" | "SlowFast-4x16-R50" => Some(Self::slowfast4x16_r50()),
            "toy_slow" => Some(Self::toy_slow()),
            "toy_slowfast" => Some(Self::toy_slowfast()),
            _ => None,
        }
    }

    fn r50_stages(div: usize, temporal: [usize; 4]) -> Vec<StageSpec> {
        let blocks = [3, 4, 6, 3];
        let inner = [64, 128, 256, 512];
        let strides = [1, 2, 2, 2];
        (0..4)
            .map(|i| StageSpec {
                blocks: blocks[i],
                inner_channels: inner[i] / div,
                out_channels: inner[i] * 4 / div,
                temporal_kernel: temporal[i],
                spatial_stride: strides[i],
                bottleneck: true,
            })
            .collect()
    }

    /// ResNet-50 Slow pathway, 8 frames with stride 8, 256² input.
    pub fn slow8x8_r50() -> Self {
        Self {
            name: "slow8x8_r50".into(),
            pathways: vec![PathwaySpec {
                name: "slow".into(),
                adaptive: true,
                frame_ratio: 1,
                body: PathwayBody::Residual(ResidualSpec {
                    stem: StemSpec {
                        out_channels: 64,
                        kernel: [1, 7, 7],
                        stride: [1, 2, 2],
                        pool: Some(PoolSpec {
                            kernel: [1, 3, 3],
                            stride: [1, 2, 2],
                        }),
                    },
                    stages: Self::r50_stages(1, [1, 1, 3, 3]),
                }),
            }],
            fusion_points: vec![],
            alpha: 1,
            beta: 0.0,
            base_spatial: 256,
            base_frames: 8,
            base_stride: 8,
            num_classes: 400,
            head: true,
        }
    }

    /// ResNet-50 SlowFast 4×16 with α = 8, β = 1/8.
    pub fn slowfast4x16_r50() -> Self {
        let mut spec = Self::slow8x8_r50();
        spec.name = "slowfast4x16_r50".into();
        spec.base_frames = 4;
        spec.base_stride = 16;
        spec.alpha = 8;
        spec.beta = 0.125;
        spec.fusion_points = vec![0, 1, 2, 3];
        spec.pathways.push(PathwaySpec {
            name: "fast".into(),
            adaptive: false,
            frame_ratio: 8,
            body: PathwayBody::Residual(ResidualSpec {
                stem: StemSpec {
                    out_channels: 8,
                    kernel: [5, 7, 7],
                    stride: [1, 2, 2],
                    pool: Some(PoolSpec {
                        kernel: [1, 3, 3],
                        stride: [1, 2, 2],
                    }),
                },
                stages: Self::r50_stages(8, [3, 3, 3, 3]),
            }),
        });
        spec
    }

    fn toy_stages(channels: [usize; 4]) -> Vec<StageSpec> {
        let temporal = [1, 3, 3, 3];
        let strides = [1, 2, 2, 2];
        (0..4)
            .map(|i| StageSpec {
                blocks: 2,
                inner_channels: channels[i],
                out_channels: channels[i],
                temporal_kernel: temporal[i],
                spatial_stride: strides[i],
                bottleneck: false,
            })
            .collect()
    }

    /// Desk-scale Slow-style backbone: 4 basic-block stages, 8×32² input, 16 classes.
    pub fn toy_slow() -> Self {
        Self::toy_slow_with([8, 16, 32, 64], 16)
    }

    pub fn toy_slow_with(channels: [usize; 4], num_classes: usize) -> Self {
        Self {
            name: "toy_slow".into(),
            pathways: vec![PathwaySpec {
                name: "slow".into(),
                adaptive: true,
                frame_ratio: 1,
                body: PathwayBody::Residual(ResidualSpec {
                    stem: StemSpec {
                        out_channels: channels[0],
                        kernel: [1, 3, 3],
                        stride: [1, 2, 2],
                        pool: None,
                    },
                    stages: Self::toy_stages(channels),
                }),
            }],
            fusion_points: vec![],
            alpha: 1,
            beta: 0.0,
            base_spatial: 32,
            base_frames: 8,
            base_stride: 1,
            num_classes,
            head: true,
        }
    }

    /// Two-pathway toy: Slow sees 2 frames, Fast all 8 (α = 4, β = 1/4).
    pub fn toy_slowfast() -> Self {
        Self::toy_slowfast_with([8, 16, 32, 64], 16)
    }

    pub fn toy_slowfast_with(channels: [usize; 4], num_classes: usize) -> Self {
        let mut spec = Self::toy_slow_with(channels, num_classes);
        spec.name = "toy_slowfast".into();
        spec.base_frames = 2;
        spec.base_stride = 4;
        spec.alpha = 4;
        spec.beta = 0.25;
        spec.fusion_points = vec![1, 2, 3];
        let fast_channels = channels.map(|c| (c / 4).max(1));
        let mut fast_stages = Self::toy_stages(fast_channels);
        for s in &mut fast_stages {
            s.temporal_kernel = 3;
        }
        spec.pathways.push(PathwaySpec {
            name: "fast".into(),
            adaptive: false,
            frame_ratio: 4,
            body: PathwayBody::Residual(ResidualSpec {
                stem: StemSpec {
                    out_channels: fast_channels[0],
                    kernel: [3, 3, 3],
                    stride: [1, 2, 2],
                    pool: None,
                },
                stages: fast_stages,
            }),
        });
        spec
    }

    /// Output channels of a residual pathway at fusion boundary `b`.
    pub fn boundary_channels(&self, pathway: usize, b: usize) -> Option<usize> {
        match &self.pathways.get(pathway)?.body {
            PathwayBody::Residual(r) => {
                if b == 0 {
                    Some(r.stem.out_channels)
                } else {
                    r.stages.get(b - 1).map(|s| s.out_channels)
                }
            }
            PathwayBody::Layers(_) => None,
        }
    }

    /// Lateral channels (2βC) entering the Slow pathway at boundary `b`.
    pub fn lateral_channels(&self, b: usize) -> Result<usize> {
        let fast = self
            .boundary_channels(1, b)
            .ok_or_else(|| A3dError::InvalidArch(format!("no Fast boundary {b}")))?;
        Ok(2 * fast)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pathways.is_empty() || self.pathways.len() > 2 {
            return Err(A3dError::InvalidArch("one or two pathways are supported".into()));
        }
        if !self.slow().adaptive {
            return Err(A3dError::InvalidArch("the first pathway must be adaptive".into()));
        }
        if self.base_spatial == 0 || self.base_frames == 0 || self.num_classes == 0 {
            return Err(A3dError::InvalidArch("base sizes and class count must be >= 1".into()));
        }
        if self.pathways.len() == 1 {
            if !self.fusion_points.is_empty() {
                return Err(A3dError::InvalidArch(
                    "single-pathway specs cannot have fusion points".into(),
                ));
            }
        } else {
            let fast = &self.pathways[1];
            if fast.adaptive {
                return Err(A3dError::InvalidArch("the Fast pathway is never adaptive".into()));
            }
            if fast.frame_ratio != self.alpha {
                return Err(A3dError::InvalidArch(format!(
                    "Fast frame ratio {} must equal alpha {}",
                    fast.frame_ratio, self.alpha
                )));
            }
            let (PathwayBody::Residual(s), PathwayBody::Residual(f)) =
                (&self.slow().body, &fast.body)
            else {
                return Err(A3dError::InvalidArch(
                    "two-pathway specs require residual pathways".into(),
                ));
            };
            if s.stages.len() != f.stages.len() {
                return Err(A3dError::InvalidArch("pathways must have equal stage counts".into()));
            }
            for &b in &self.fusion_points {
                if b >= s.stages.len() {
                    return Err(A3dError::InvalidArch(format!(
                        "fusion point {b} has no following Slow stage"
                    )));
                }
                let cs = self.boundary_channels(0, b).unwrap();
                let cf = self.boundary_channels(1, b).unwrap();
                let expect = self.beta * cs as f64;
                if (expect - cf as f64).abs() > 1e-9 {
                    return Err(A3dError::InvalidArch(format!(
                        "fusion at boundary {b}: Fast has {cf} channels but beta*C = {expect}"
                    )));
                }
            }
        }
        for layer in self.layers()? {
            layer.spec.validate()?;
        }
        Ok(())
    }

    /// Expands the architecture into its cost-bearing layers with full-configuration shapes.
    pub fn layers(&self) -> Result<Vec<PlacedLayer>> {
        let mut out = Vec::new();
        let two = self.is_two_pathway();
        let mut finals = Vec::new();
        for (pi, pathway) in self.pathways.iter().enumerate() {
            let frames = self.base_frames * pathway.frame_ratio;
            let mut shape = [frames, self.base_spatial, self.base_spatial];
            let scal = pathway.adaptive;
            let push = |out: &mut Vec<PlacedLayer>, name: String, spec: LayerSpec, shape: [usize; 3]| {
                out.push(PlacedLayer {
                    name: format!("{}.{}", pathway.name, name),
                    spec,
                    out_shape: shape,
                    pathway: pi,
                    resolution_scaled: scal,
                })
            };
            match &pathway.body {
                PathwayBody::Layers(list) => {
                    let mut c = 3;
                    for (i, l) in list.iter().enumerate() {
                        if l.kind != LayerKind::Bn {
                            shape = propagate(shape, l.stride);
                        }
                        c = l.out_channels;
                        push(&mut out, format!("layer{i}"), l.clone(), shape);
                    }
                    finals.push((c, scal));
                }
                PathwayBody::Residual(r) => {
                    let lateral_into = |b: usize| -> Result<usize> {
                        if two && pi == 0 && self.fusion_points.contains(&b) {
                            self.lateral_channels(b)
                        } else {
                            Ok(0)
                        }
                    };
                    let st = &r.stem;
                    shape = propagate(shape, st.stride);
                    let mut stem = LayerSpec::conv(st.kernel, 3, st.out_channels, st.stride, scal);
                    stem.width_scalable_in = false;
                    push(&mut out, "stem.conv".into(), stem, shape);
                    push(&mut out, "stem.bn".into(), LayerSpec::bn(st.out_channels, scal), shape);
                    if let Some(pool) = st.pool {
                        shape = propagate(shape, pool.stride);
                        let mut p = LayerSpec::conv(pool.kernel, st.out_channels, st.out_channels, pool.stride, scal);
                        p.kind = LayerKind::Pool3d;
                        push(&mut out, "stem.pool".into(), p, shape);
                    }
                    let mut cin = st.out_channels;
                    for (si, stage) in r.stages.iter().enumerate() {
                        let lateral = lateral_into(si)?;
                        for b in 0..stage.blocks {
                            let stride = if b == 0 { stage.spatial_stride } else { 1 };
                            let tail = if b == 0 { lateral } else { 0 };
                            let in_shape = shape;
                            let out_shape = propagate(in_shape, [1, stride, stride]);
                            let name = |n: &str| format!("s{}.b{}.{}", si + 1, b, n);
                            let mut first = if stage.bottleneck {
                                LayerSpec::conv([stage.temporal_kernel, 1, 1], cin + tail, stage.inner_channels, [1, 1, 1], scal)
                            } else {
                                LayerSpec::conv([stage.temporal_kernel, 3, 3], cin + tail, stage.out_channels, [1, stride, stride], scal)
                            };
                            first.fixed_in_tail = tail;
                            if stage.bottleneck {
                                push(&mut out, name("conv_a"), first, in_shape);
                                push(&mut out, name("bn_a"), LayerSpec::bn(stage.inner_channels, scal), in_shape);
                                push(&mut out, name("conv_b"), LayerSpec::conv([1, 3, 3], stage.inner_channels, stage.inner_channels, [1, stride, stride], scal), out_shape);
                                push(&mut out, name("bn_b"), LayerSpec::bn(stage.inner_channels, scal), out_shape);
                                push(&mut out, name("conv_c"), LayerSpec::conv([1, 1, 1], stage.inner_channels, stage.out_channels, [1, 1, 1], scal), out_shape);
                                push(&mut out, name("bn_c"), LayerSpec::bn(stage.out_channels, scal), out_shape);
                            } else {
                                push(&mut out, name("conv_a"), first, out_shape);
                                push(&mut out, name("bn_a"), LayerSpec::bn(stage.out_channels, scal), out_shape);
                                push(&mut out, name("conv_b"), LayerSpec::conv([1, 3, 3], stage.out_channels, stage.out_channels, [1, 1, 1], scal), out_shape);
                                push(&mut out, name("bn_b"), LayerSpec::bn(stage.out_channels, scal), out_shape);
                            }
                            if b == 0 && (cin + tail != stage.out_channels || stride != 1) {
                                let mut sc = LayerSpec::conv([1, 1, 1], cin + tail, stage.out_channels, [1, stride, stride], scal);
                                sc.fixed_in_tail = tail;
                                push(&mut out, name("shortcut"), sc, out_shape);
                                push(&mut out, name("shortcut_bn"), LayerSpec::bn(stage.out_channels, scal), out_shape);
                            }
                            cin = stage.out_channels;
                            shape = out_shape;
                        }
                    }
                    finals.push((cin, scal));
                }
            }
        }
        if two {
            // Lateral convolutions run on Fast features at Fast resolution.
            let fast_shapes = self.boundary_shapes(1)?;
            for &b in &self.fusion_points {
                let cf = self.boundary_channels(1, b).unwrap();
                let fs = fast_shapes[b];
                let mut spec = LayerSpec::conv([5, 1, 1], cf, 2 * cf, [self.alpha, 1, 1], false);
                spec.kind = LayerKind::FusionConv;
                spec.bias = true;
                out.push(PlacedLayer {
                    name: format!("fuse.{b}"),
                    spec,
                    out_shape: [ceil_div(fs[0], self.alpha), fs[1], fs[2]],
                    pathway: 1,
                    resolution_scaled: false,
                });
            }
        }
        if self.head {
            let total: usize = finals.iter().map(|f| f.0).sum();
            let tail: usize = finals.iter().filter(|f| !f.1).map(|f| f.0).sum();
            out.push(PlacedLayer {
                name: "head.fc".into(),
                spec: LayerSpec {
                    kind: LayerKind::Fc,
                    kernel: unit3(),
                    in_channels: total,
                    out_channels: self.num_classes,
                    stride: unit3(),
                    width_scalable_in: true,
                    width_scalable_out: false,
                    fixed_in_tail: tail,
                    bias: true,
                },
                out_shape: [1, 1, 1],
                pathway: 0,
                resolution_scaled: false,
            });
        }
        Ok(out)
    }

    /// Full-configuration feature shape of a residual pathway at each boundary.
    pub fn boundary_shapes(&self, pathway: usize) -> Result<Vec<[usize; 3]>> {
        let p = &self.pathways[pathway];
        let PathwayBody::Residual(r) = &p.body else {
            return Err(A3dError::InvalidArch("boundary shapes need a residual pathway".into()));
        };
        let mut shape = [
            self.base_frames * p.frame_ratio,
            self.base_spatial,
            self.base_spatial,
        ];
        shape = propagate(shape, r.stem.stride);
        if let Some(pool) = r.stem.pool {
            shape = propagate(shape, pool.stride);
        }
        let mut shapes = vec![shape];
        for s in &r.stages {
            shape = propagate(shape, [1, s.spatial_stride, s.spatial_stride]);
            shapes.push(shape);
        }
        Ok(shapes)
    }
}
