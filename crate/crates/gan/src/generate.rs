use std::fmt;
use std::path::Path;
use std::str::FromStr;

use advaug_core::imaging::{from_chw, resize_bilinear, to_chw};
use advaug_core::nn::{Network, Tensor};
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_config, load_network};
use crate::config::GanConfig;
use crate::model::generator_specs;
use crate::GanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    BToA,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::AToB => "a_to_b",
            Direction::BToA => "b_to_a",
        }
    }

    fn network_name(self) -> &'static str {
        match self {
            Direction::AToB => "g_ab",
            Direction::BToA => "g_ba",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = GanError;

    fn from_str(s: &str) -> Result<Self, GanError> {
        match s {
            "a_to_b" | "a2b" => Ok(Direction::AToB),
            "b_to_a" | "b2a" => Ok(Direction::BToA),
            other => Err(GanError::Argument(format!("unknown direction '{other}'"))),
        }
    }
}

/// One generator loaded for inference. Safe to share between threads.
#[derive(Debug, Clone)]
pub struct Translator {
    pub config: GanConfig,
    pub direction: Direction,
    net: Network,
}

impl Translator {
    pub fn load(checkpoint: &Path, direction: Direction) -> Result<Self, GanError> {
        let config = load_config(checkpoint)?;
        config.validate()?;
        let template = Network::new(&generator_specs(&config), &mut ChaCha8Rng::seed_from_u64(0));
        let net = load_network(checkpoint, direction.network_name(), &template)?;
        Ok(Self { config, direction, net })
    }

    pub fn from_network(config: GanConfig, direction: Direction, net: Network) -> Self {
        Self { config, direction, net }
    }

    pub fn resolution(&self) -> u32 {
        self.config.resolution
    }

    /// Translates an image already at model resolution and in [-1, 1].
    pub fn translate_tensor(&self, x: &Tensor) -> Tensor {
        self.net.forward(x)
    }

    /// Bilinear resize to model resolution, then translation. Output is a
    /// `1 x 3 x r x r` tensor in [-1, 1].
    pub fn translate(&self, img: &RgbImage) -> Tensor {
        let r = self.resolution();
        let x = to_chw(&resize_bilinear(img, r, r));
        self.translate_tensor(&Tensor::from_vec(1, 3, r as usize, r as usize, x))
    }

    /// Translated image at model resolution.
    pub fn translate_image(&self, img: &RgbImage) -> RgbImage {
        let r = self.resolution();
        from_chw(&self.translate(img).data, r, r)
    }
}

/// Loads the generator for `direction` and translates one image.
pub fn generate(checkpoint: &Path, direction: Direction, img: &RgbImage) -> Result<Tensor, GanError> {
    Ok(Translator::load(checkpoint, direction)?.translate(img))
}
