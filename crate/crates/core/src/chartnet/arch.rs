use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape and width configuration of the residual chart network.
///
/// Layout: a 1×1 stem convolution, then one group of residual blocks per entry
/// of `channels`. Every group after the first opens with a strided 3×3
/// convolution that changes the width and halves the time and antenna axes
/// (kernel 3, stride 2, no padding). An axis shorter than 3 is not downsampled.
/// Global average pooling and two dense layers produce the 2D output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub tap_count: usize,
    pub link_count: usize,
    pub stem_channels: usize,
    pub channels: Vec<usize>,
    pub blocks_per_group: usize,
    pub head_hidden: usize,
}

/// Tensor shape `(time, antenna, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub time: usize,
    pub antenna: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(time: usize, antenna: usize, channels: usize) -> Self {
        Shape {
            time,
            antenna,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.time * self.antenna * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Geometry of one convolution (dense layers are 1×1 convolutions on a 1×1 map).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    /// Offset of the `[kh][kw][cin][cout]` weight block in the flat parameters.
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.kernel * self.kernel * self.input.channels * self.output.channels
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.output.channels
    }

    pub fn fan_in(&self) -> usize {
        self.kernel * self.kernel * self.input.channels
    }

    /// True when the input can be used directly as the im2col matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == (1, 1) && self.pad == (0, 0)
    }
}

/// Output length of a kernel-3 convolution along one axis for the given rule.
fn downsampled(len: usize) -> (usize, usize, usize) {
    if len >= 3 {
        ((len - 3) / 2 + 1, 2, 0)
    } else {
        (len, 1, 1)
    }
}

impl ArchSpec {
    /// Full-size network: 64-channel stem, groups of (64, 128, 256) channels
    /// with three blocks each, and a 200-unit hidden layer.
    pub fn full(link_count: usize) -> Self {
        ArchSpec {
            tap_count: 90,
            link_count,
            stem_channels: 64,
            channels: vec![64, 128, 256],
            blocks_per_group: 3,
            head_hidden: 200,
        }
    }

    /// CPU-sized profile: (16, 32, 64) channels, the strided group entries
    /// only (no residual blocks) and a 64-unit hidden layer.
    pub fn desk(link_count: usize) -> Self {
        ArchSpec {
            tap_count: 90,
            link_count,
            stem_channels: 16,
            channels: vec![16, 32, 64],
            blocks_per_group: 0,
            head_hidden: 64,
        }
    }

    /// Small network for gradient checks (fewer than 10^4 parameters).
    pub fn reduced(tap_count: usize, link_count: usize) -> Self {
        ArchSpec {
            tap_count,
            link_count,
            stem_channels: 4,
            channels: vec![4, 8, 8],
            blocks_per_group: 3,
            head_hidden: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tap_count == 0 || self.link_count == 0 {
            return Err(Error::config(
                "network input must have at least one tap and one link",
            ));
        }
        if self.channels.is_empty() || self.channels.contains(&0) || self.stem_channels == 0 {
            return Err(Error::config("channel widths must be positive"));
        }
        if self.head_hidden == 0 {
            return Err(Error::config("head width must be positive"));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(self.tap_count, self.link_count, 1)
    }

    /// Output shape of the stem and of every group, in order.
    pub fn group_shapes(&self) -> Vec<Shape> {
        let layers = self.layers();
        let mut shapes = vec![layers.convs[layers.stem].output];
        for g in &layers.groups {
            let last = g.blocks.last().map(|b| b.1).or(g.entry).unwrap_or(layers.stem);
            shapes.push(layers.convs[last].output);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers().param_count
    }

    /// Resolves all layer geometries and parameter offsets.
    pub fn layers(&self) -> Layers {
        let mut convs = Vec::new();
        let mut offset = 0;
        let mut push = |input: Shape, output: Shape, kernel, stride, pad, convs: &mut Vec<ConvSpec>| {
            let mut spec = ConvSpec {
                input,
                output,
                kernel,
                stride,
                pad,
                weight_offset: offset,
                bias_offset: 0,
            };
            spec.bias_offset = offset + spec.weight_len();
            offset += spec.param_len();
            convs.push(spec);
            convs.len() - 1
        };

        let input = self.input_shape();
        let mut shape = Shape::new(input.time, input.antenna, self.stem_channels);
        let stem = push(input, shape, 1, (1, 1), (0, 0), &mut convs);

        let mut groups = Vec::new();
        for (g, &width) in self.channels.iter().enumerate() {
            let entry = if g > 0 {
                let (t, st, pt) = downsampled(shape.time);
                let (a, sa, pa) = downsampled(shape.antenna);
                let out = Shape::new(t, a, width);
                let idx = push(shape, out, 3, (st, sa), (pt, pa), &mut convs);
                shape = out;
                Some(idx)
            } else if shape.channels != width {
                let out = Shape::new(shape.time, shape.antenna, width);
                let idx = push(shape, out, 3, (1, 1), (1, 1), &mut convs);
                shape = out;
                Some(idx)
            } else {
                None
            };
            let blocks = (0..self.blocks_per_group)
                .map(|_| {
                    let a = push(shape, shape, 3, (1, 1), (1, 1), &mut convs);
                    let b = push(shape, shape, 3, (1, 1), (1, 1), &mut convs);
                    (a, b)
                })
                .collect();
            groups.push(Group { entry, blocks });
        }

        let pooled = Shape::new(1, 1, shape.channels);
        let hidden = Shape::new(1, 1, self.head_hidden);
        let dense_hidden = push(pooled, hidden, 1, (1, 1), (0, 0), &mut convs);
        let dense_out = push(hidden, Shape::new(1, 1, 2), 1, (1, 1), (0, 0), &mut convs);
        Layers {
            convs,
            stem,
            groups,
            dense_hidden,
            dense_out,
            param_count: offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// Strided / widening convolution at the start of the group.
    pub entry: Option<usize>,
    /// `(first, second)` convolution of each residual block.
    pub blocks: Vec<(usize, usize)>,
}

/// Per-layer shape index of a network; indices point into `convs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub convs: Vec<ConvSpec>,
    pub stem: usize,
    pub groups: Vec<Group>,
    pub dense_hidden: usize,
    pub dense_out: usize,
    pub param_count: usize,
}

impl Layers {
    pub fn conv_name(&self, index: usize) -> String {
        if index == self.stem {
            return "stem".into();
        }
        if index == self.dense_hidden {
            return "dense_hidden".into();
        }
        if index == self.dense_out {
            return "dense_out".into();
        }
        for (g, group) in self.groups.iter().enumerate() {
            if group.entry == Some(index) {
                return format!("group{}.entry", g + 1);
            }
            for (b, (c1, c2)) in group.blocks.iter().enumerate() {
                if *c1 == index {
                    return format!("group{}.block{}.conv1", g + 1, b + 1);
                }
                if *c2 == index {
                    return format!("group{}.block{}.conv2", g + 1, b + 1);
                }
            }
        }
        format!("layer{index}")
    }
}
