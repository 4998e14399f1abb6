use crate::error::{Error, Result};

/// One valid (unpadded, stride 1) 3D convolution followed by ReLU and a
/// non-overlapping max pool of side `pool` (1 disables pooling).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

impl ConvSpec {
    pub const fn new(out_channels: usize, kernel: usize, pool: usize) -> Self {
        Self {
            out_channels,
            kernel,
            pool,
        }
    }
}

/// Shapes of one conv stage as seen by the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub in_side: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Side after the convolution, before pooling.
    pub conv_side: usize,
    pub pool: usize,
    /// Side after pooling.
    pub out_side: usize,
}

impl ConvShape {
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.pow(3)
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.fan_in()
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_side.pow(3)
    }
}

/// Offsets of one layer's weights and biases in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub weights: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl ParamBlock {
    pub fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    pub conv: Vec<ConvSpec>,
    pub dense: Vec<usize>,
}

impl Architecture {
    pub fn new(input_side: usize, conv: Vec<ConvSpec>, dense: Vec<usize>) -> Result<Self> {
        let a = Self {
            input_side,
            conv,
            dense,
        };
        a.validate()?;
        Ok(a)
    }

    /// Three 64-channel conv layers with kernels 4 and pools (2, 2, 1), then
    /// dense `[3000, G^3]`. Only valid for sides where every stage keeps a
    /// positive extent (G >= 38).
    pub fn reference(g: usize) -> Result<Self> {
        Self::new(
            g,
            vec![
                ConvSpec::new(64, 4, 2),
                ConvSpec::new(64, 4, 2),
                ConvSpec::new(64, 4, 1),
            ],
            vec![3000, g * g * g],
        )
    }

    /// The reference layout, or for small sides the same channel counts with
    /// kernels (4, 3, 3) so the last stage stays non-empty.
    pub fn standard(g: usize) -> Result<Self> {
        Self::reference(g).or_else(|_| {
            Self::new(
                g,
                vec![
                    ConvSpec::new(64, 4, 2),
                    ConvSpec::new(64, 3, 2),
                    ConvSpec::new(64, 3, 1),
                ],
                vec![3000, g * g * g],
            )
        })
    }

    /// A narrow variant for single-core training runs.
    pub fn compact(g: usize) -> Result<Self> {
        Self::new(
            g,
            vec![ConvSpec::new(8, 4, 2), ConvSpec::new(16, 3, 2), ConvSpec::new(32, 3, 1)],
            vec![256, g * g * g],
        )
    }

    pub fn output_len(&self) -> usize {
        self.input_side.pow(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 {
            return Err(Error::invalid("input side must be positive"));
        }
        if self.dense.is_empty() {
            return Err(Error::invalid("at least one dense layer is required"));
        }
        if *self.dense.last().unwrap() != self.output_len() {
            return Err(Error::invalid(format!(
                "final dense size {} must equal input_side^3 = {}",
                self.dense.last().unwrap(),
                self.output_len()
            )));
        }
        if self.dense.iter().any(|&d| d == 0) {
            return Err(Error::invalid("dense sizes must be positive"));
        }
        let mut side = self.input_side;
        for (i, c) in self.conv.iter().enumerate() {
            if c.out_channels == 0 || c.kernel == 0 || c.pool == 0 {
                return Err(Error::invalid(format!("conv layer {i} has a zero size")));
            }
            if c.kernel > side {
                return Err(Error::invalid(format!(
                    "conv layer {i}: kernel {} exceeds input side {side}",
                    c.kernel
                )));
            }
            let conv_side = side - c.kernel + 1;
            side = conv_side / c.pool;
            if side == 0 {
                return Err(Error::invalid(format!(
                    "conv layer {i}: pooling {} collapses side {conv_side}",
                    c.pool
                )));
            }
        }
        Ok(())
    }

    pub fn conv_shapes(&self) -> Vec<ConvShape> {
        let mut side = self.input_side;
        let mut ch = 1;
        self.conv
            .iter()
            .map(|c| {
                let conv_side = side - c.kernel + 1;
                let s = ConvShape {
                    in_channels: ch,
                    in_side: side,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    conv_side,
                    pool: c.pool,
                    out_side: conv_side / c.pool,
                };
                side = s.out_side;
                ch = c.out_channels;
                s
            })
            .collect()
    }

    /// Length of the flattened conv output feeding the first dense layer.
    pub fn flat_len(&self) -> usize {
        self.conv_shapes().last().map_or(self.output_len(), |s| s.out_len())
    }

    /// Parameter blocks: all conv layers, then all dense layers.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |fan_in: usize, fan_out: usize| {
            let w = at;
            let b = w + fan_in * fan_out;
            at = b + fan_out;
            out.push(ParamBlock {
                weights: w,
                bias: b,
                fan_in,
                fan_out,
            });
        };
        for s in self.conv_shapes() {
            push(s.fan_in(), s.out_channels);
        }
        let mut prev = self.flat_len();
        for &d in &self.dense {
            push(prev, d);
            prev = d;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().last().map_or(0, |b| b.end())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_layout_needs_a_large_grid() {
        assert!(Architecture::reference(24).is_err());
        let a = Architecture::reference(40).unwrap();
        let s = a.conv_shapes();
        assert_eq!(s.iter().map(|s| s.out_side).collect::<Vec<_>>(), vec![18, 7, 4]);
        assert_eq!(a.flat_len(), 64 * 64);
    }

    #[test]
    fn standard_and_compact_fit_small_grids() {
        let a = Architecture::standard(24).unwrap();
        assert_eq!(a.conv_shapes().last().unwrap().out_side, 2);
        let c = Architecture::compact(24).unwrap();
        assert_eq!(c.flat_len(), 32 * 8);
        // conv weights + biases, then dense
        let expected =
            (8 * 64 + 8) + (16 * 8 * 27 + 16) + (32 * 16 * 27 + 32) + (256 * 256 + 256) + (256 * 13824 + 13824);
        assert_eq!(c.param_count(), expected);
    }

    #[test]
    fn invalid_layouts_are_rejected() {
        assert!(Architecture::new(8, vec![], vec![10]).is_err());
        assert!(Architecture::new(8, vec![ConvSpec::new(1, 9, 1)], vec![512]).is_err());
        assert!(Architecture::new(8, vec![ConvSpec::new(1, 2, 0)], vec![512]).is_err());
        assert!(Architecture::new(2, vec![], vec![8]).is_ok());
    }
}
