use crate::error::{arg_err, Result};

/// How the noise level reaches the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    /// Two input channels (real, imaginary); σ is ignored.
    Unconditional,
    /// A third constant input channel holding σ.
    NoiseChannel,
}

/// One stage of residual blocks sharing a channel width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub width: usize,
    pub blocks: usize,
    /// Mean-pool 2×2 after the last block of the stage.
    pub downsample: bool,
}

/// Shape of the residual energy network:
/// `stem conv → stages of ResBlocks → swish → global sum pool → dense(1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub conditioning: Conditioning,
    /// Divide the network output by σ² so the energy's curvature follows
    /// the noise level. Only meaningful with [`Conditioning::NoiseChannel`].
    pub noise_scaled: bool,
    pub stem_width: usize,
    pub stages: Vec<Stage>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::with_widths(&[64, 128, 256])
    }
}

impl Architecture {
    /// One block per stage, the first stage at full resolution and every
    /// later stage downsampling; the stem has the first stage's width.
    pub fn with_widths(widths: &[usize]) -> Self {
        let stages = widths
            .iter()
            .enumerate()
            .map(|(i, &width)| Stage {
                width,
                blocks: 1,
                downsample: i > 0,
            })
            .collect();
        Self {
            conditioning: Conditioning::NoiseChannel,
            noise_scaled: true,
            stem_width: widths.first().copied().unwrap_or(1),
            stages,
        }
    }

    pub fn input_channels(&self) -> usize {
        match self.conditioning {
            Conditioning::Unconditional => 2,
            Conditioning::NoiseChannel => 3,
        }
    }

    /// Spatial dimensions must be divisible by this.
    pub fn downsample_factor(&self) -> usize {
        1 << self.stages.iter().filter(|s| s.downsample).count()
    }

    pub fn final_width(&self) -> usize {
        self.stages.last().map_or(self.stem_width, |s| s.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_width == 0 {
            return arg_err("stem width must be positive");
        }
        if self.noise_scaled && self.conditioning == Conditioning::Unconditional {
            return arg_err("noise scaling requires a noise-conditioned network");
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.width == 0 || s.blocks == 0 {
                return arg_err(format!("stage {i} needs positive width and block count"));
            }
        }
        Ok(())
    }

    /// Spectral-normalized weights, biases and their index layout.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        self.plan().1
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_specs().iter().map(TensorSpec::len).sum()
    }

    pub(crate) fn plan(&self) -> (NetPlan, Vec<TensorSpec>) {
        let mut specs = Vec::new();
        let conv = |specs: &mut Vec<TensorSpec>, name: String, c_in: usize, c_out: usize, k: usize| {
            let w = specs.len();
            specs.push(TensorSpec {
                name: format!("{name}.weight"),
                shape: vec![c_out, c_in, k, k],
                normalized: true,
            });
            specs.push(TensorSpec {
                name: format!("{name}.bias"),
                shape: vec![c_out],
                normalized: false,
            });
            ConvPlan {
                weight: w,
                bias: w + 1,
                c_in,
                c_out,
                k,
            }
        };
        let stem = conv(&mut specs, "stem".into(), self.input_channels(), self.stem_width, 3);
        let mut blocks = Vec::new();
        let mut c_in = self.stem_width;
        for stage in &self.stages {
            for b in 0..stage.blocks {
                let idx = blocks.len();
                let c_out = stage.width;
                let conv1 = conv(&mut specs, format!("block{idx}.conv1"), c_in, c_out, 3);
                let conv2 = conv(&mut specs, format!("block{idx}.conv2"), c_out, c_out, 3);
                let skip = (c_in != c_out).then(|| conv(&mut specs, format!("block{idx}.skip"), c_in, c_out, 1));
                blocks.push(BlockPlan {
                    conv1,
                    conv2,
                    skip,
                    downsample: stage.downsample && b + 1 == stage.blocks,
                });
                c_in = c_out;
            }
        }
        let dense_weight = specs.len();
        specs.push(TensorSpec {
            name: "dense.weight".into(),
            shape: vec![1, c_in],
            normalized: true,
        });
        specs.push(TensorSpec {
            name: "dense.bias".into(),
            shape: vec![1],
            normalized: false,
        });
        let plan = NetPlan {
            stem,
            blocks,
            dense_weight,
            dense_bias: dense_weight + 1,
            final_width: c_in,
        };
        (plan, specs)
    }
}

/// Name, shape and role of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Weight matrix subject to spectral normalization.
    pub normalized: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)` of the matrix view used for spectral normalization:
    /// output channels × everything else.
    pub fn matrix_dims(&self) -> (usize, usize) {
        let rows = self.shape[0];
        (rows, self.len() / rows)
    }

    /// Fan-in used for initialization.
    pub fn fan_in(&self) -> usize {
        self.matrix_dims().1
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvPlan {
    pub weight: usize,
    pub bias: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockPlan {
    pub conv1: ConvPlan,
    pub conv2: ConvPlan,
    pub skip: Option<ConvPlan>,
    pub downsample: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct NetPlan {
    pub stem: ConvPlan,
    pub blocks: Vec<BlockPlan>,
    pub dense_weight: usize,
    pub dense_bias: usize,
    pub final_width: usize,
}
