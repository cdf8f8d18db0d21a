use advaug_core::nn::{Init, LayerSpec, Network};
use rand::Rng;

use crate::config::{DiscriminatorKind, GanConfig, GeneratorKind};

const IMAGE_CHANNELS: usize = 3;

fn conv_block(inp: usize, out: usize, stride: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(inp, out, 3, stride, 1, Init::He),
        LayerSpec::InstanceNorm,
        LayerSpec::Relu,
    ]
}

/// Layer list of a generator. Every generator is `tanh(body(x) + skip(x))`
/// where `skip` is a 1x1 convolution initialized to the identity, so an
/// untrained generator starts close to `tanh(x)`.
pub fn generator_specs(cfg: &GanConfig) -> Vec<LayerSpec> {
    let c = cfg.base_channels;
    let body = match cfg.generator {
        GeneratorKind::Micro => vec![
            LayerSpec::conv(IMAGE_CHANNELS, 4, 3, 1, 1, Init::He),
            LayerSpec::InstanceNorm,
            LayerSpec::Relu,
            LayerSpec::conv(4, IMAGE_CHANNELS, 3, 1, 1, Init::Normal(0.1)),
        ],
        GeneratorKind::Resnet => {
            let mut body = conv_block(IMAGE_CHANNELS, c, 1);
            body.extend(conv_block(c, 2 * c, 2));
            body.extend(conv_block(2 * c, 4 * c, 2));
            for _ in 0..cfg.residual_blocks {
                body.push(LayerSpec::Sum(vec![
                    vec![],
                    vec![
                        LayerSpec::conv(4 * c, 4 * c, 3, 1, 1, Init::He),
                        LayerSpec::InstanceNorm,
                        LayerSpec::Relu,
                        LayerSpec::conv(4 * c, 4 * c, 3, 1, 1, Init::He),
                        LayerSpec::InstanceNorm,
                    ],
                ]));
            }
            body.push(LayerSpec::Upsample2);
            body.extend(conv_block(4 * c, 2 * c, 1));
            body.push(LayerSpec::Upsample2);
            body.extend(conv_block(2 * c, c, 1));
            body.push(LayerSpec::conv(c, IMAGE_CHANNELS, 3, 1, 1, Init::Normal(0.02)));
            body
        }
    };
    vec![
        LayerSpec::Sum(vec![
            body,
            vec![LayerSpec::conv(IMAGE_CHANNELS, IMAGE_CHANNELS, 1, 1, 0, Init::Identity(1.0))],
        ]),
        LayerSpec::Tanh,
    ]
}

/// Layer list of a patch discriminator producing one score per patch.
pub fn discriminator_specs(cfg: &GanConfig) -> Vec<LayerSpec> {
    let n = Init::Normal(0.02);
    match cfg.discriminator {
        DiscriminatorKind::Compact => vec![
            LayerSpec::conv(IMAGE_CHANNELS, 16, 4, 2, 1, n),
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(16, 32, 4, 2, 1, n),
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(32, 64, 4, 1, 1, n),
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(64, 1, 1, 1, 0, n),
        ],
        DiscriminatorKind::Patch70 => vec![
            LayerSpec::conv(IMAGE_CHANNELS, 64, 4, 2, 1, n),
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(64, 128, 4, 2, 1, n),
            LayerSpec::InstanceNorm,
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(128, 256, 4, 2, 1, n),
            LayerSpec::InstanceNorm,
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(256, 512, 4, 1, 1, n),
            LayerSpec::InstanceNorm,
            LayerSpec::LeakyRelu(0.2),
            LayerSpec::conv(512, 1, 4, 1, 1, n),
        ],
    }
}

/// Receptive field in pixels of a sequential convolution stack.
pub fn receptive_field(specs: &[LayerSpec]) -> usize {
    let (mut rf, mut jump) = (1usize, 1usize);
    for s in specs {
        if let LayerSpec::Conv { kernel, stride, .. } = s {
            rf += (kernel - 1) * jump;
            jump *= stride;
        }
    }
    rf
}

/// The four networks of a cycle-consistent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleModels {
    pub g_ab: Network,
    pub g_ba: Network,
    pub d_a: Network,
    pub d_b: Network,
}

impl CycleModels {
    pub fn new<R: Rng + ?Sized>(cfg: &GanConfig, rng: &mut R) -> Self {
        let g = generator_specs(cfg);
        let d = discriminator_specs(cfg);
        Self {
            g_ab: Network::new(&g, rng),
            g_ba: Network::new(&g, rng),
            d_a: Network::new(&d, rng),
            d_b: Network::new(&d, rng),
        }
    }
}
