//! Deterministic procedural racing scenes with exact cone ground truth.
//!
//! Each scene is a flat track under a sky gradient with blue and yellow
//! triangular cones placed at random perspective-scaled poses. The same scene
//! can be rendered in sunny, night (darkened and desaturated) or droplet
//! (blurred lens discs) style; the boxes never change between styles.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    cone_class_map, format_annotations, parse_annotations, save_manifest, BoundingBox, Condition, Dataset,
    DatasetError, ImageRecord, BLUE_CONE, YELLOW_CONE,
};
use crate::imaging::{luma, save_png};
use crate::{exec, seeding};

/// File written next to the manifest with the generator's own box counts.
pub const COUNTS_FILE: &str = "counts.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub count: usize,
    pub seed: u64,
    pub min_cones: usize,
    pub max_cones: usize,
    /// Cones are kept in distinct cells of a `grid x grid` partition of the image.
    pub grid: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            count: 200,
            seed: 7,
            min_cones: 2,
            max_cones: 6,
            grid: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStyle {
    Sunny,
    Night,
    Droplet,
}

impl SceneStyle {
    /// Condition tag of a procedurally rendered set; adverse styles stand in
    /// for real captures.
    pub fn condition(self) -> Condition {
        match self {
            SceneStyle::Sunny => Condition::Sunny,
            SceneStyle::Night => Condition::RealNight,
            SceneStyle::Droplet => Condition::RealDroplet,
        }
    }
}

impl std::str::FromStr for SceneStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sunny" => Ok(SceneStyle::Sunny),
            "night" => Ok(SceneStyle::Night),
            "droplet" => Ok(SceneStyle::Droplet),
            other => Err(format!("unknown scene style '{other}' (sunny|night|droplet)")),
        }
    }
}

/// One rendered scene and its boxes.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    pub boxes: Vec<BoundingBox>,
}

/// Ground-truth log emitted alongside a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLog {
    pub seed: u64,
    pub style: SceneStyle,
    pub images: usize,
    pub total_boxes: usize,
    pub boxes_per_image: BTreeMap<String, usize>,
}

pub fn scene_id(seed: u64, index: usize) -> String {
    format!("s{seed}_{index:05}")
}

/// Renders the sunny version of scene `index`.
pub fn render_scene(cfg: &SceneConfig, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(cfg.seed, index as u64));
    let (w, h) = (cfg.width, cfg.height);
    let (wf, hf) = (w as f64, h as f64);
    let horizon = (hf * rng.random_range(0.28..0.38)).round();
    let vp_x = wf * rng.random_range(0.4..0.6);
    let bottom_x = wf * rng.random_range(0.35..0.65);
    let bottom_half = wf * rng.random_range(0.35..0.5);
    let grass = [
        rng.random_range(55..80) as f64,
        rng.random_range(120..150) as f64,
        rng.random_range(45..70) as f64,
    ];
    let asphalt = rng.random_range(85.0..110.0);

    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        let yf = y as f64 + 0.5;
        for x in 0..w {
            let xf = x as f64 + 0.5;
            let noise = rng.random_range(-5.0..5.0);
            let px = if yf < horizon {
                let t = yf / horizon;
                [135.0 + 60.0 * t, 185.0 + 40.0 * t, 235.0 + 10.0 * t]
            } else {
                let t = (yf - horizon) / (hf - horizon);
                let center = vp_x + (bottom_x - vp_x) * t;
                let half = 1.5 + (bottom_half - 1.5) * t;
                let d = (xf - center).abs();
                if d < half - 1.2 * (0.5 + t) {
                    [asphalt + noise, asphalt + noise, asphalt + 4.0 + noise]
                } else if d < half {
                    [225.0 + noise, 225.0 + noise, 225.0 + noise]
                } else {
                    [grass[0] + noise, grass[1] + noise, grass[2] + noise]
                }
            };
            img.put_pixel(x, y, to_rgb(px));
        }
    }

    let target = rng.random_range(cfg.min_cones..=cfg.max_cones.max(cfg.min_cones));
    let mut boxes: Vec<BoundingBox> = Vec::new();
    let mut used_cells = Vec::new();
    let mut attempts = 0;
    while boxes.len() < target && attempts < 200 {
        attempts += 1;
        let base_y = rng.random_range((horizon + 0.12 * hf)..(hf - 2.0)).floor();
        let depth = (base_y - horizon) / (hf - horizon);
        let cone_h = ((0.07 + 0.17 * depth) * hf * rng.random_range(0.9..1.1)).round().max(5.0);
        let half_w = (0.36 * cone_h).round().max(2.0);
        let cx = rng.random_range(half_w + 1.0..wf - half_w - 1.0).floor() + 0.5;
        let top = base_y - cone_h + 1.0;
        if top < 0.0 {
            continue;
        }
        let (x1, x2) = (cx - half_w - 1.5, cx + half_w + 1.5);
        let (y1, y2) = (top, base_y + 1.0);
        let candidate = BoundingBox::from_corners(0, x1 / wf, y1 / hf, x2 / wf, y2 / hf);
        let cell = (
            (candidate.cx * cfg.grid as f64).floor() as u32,
            (candidate.cy * cfg.grid as f64).floor() as u32,
        );
        let overlaps = boxes.iter().any(|b| {
            let (a1, b1, a2, b2) = b.corners();
            let m = 2.0 / wf;
            !(x2 / wf + m < a1 || x1 / wf - m > a2 || y2 / hf + m < b1 || y1 / hf - m > b2)
        });
        if overlaps || used_cells.contains(&cell) {
            continue;
        }
        let class_id = if rng.random_bool(0.5) { BLUE_CONE } else { YELLOW_CONE };
        let tint = rng.random_range(-12.0..12.0);
        draw_cone(&mut img, class_id, cx, top, base_y, half_w, tint);
        used_cells.push(cell);
        boxes.push(BoundingBox { class_id, ..candidate });
    }
    boxes.sort_by(|a, b| a.cy.total_cmp(&b.cy).then(a.cx.total_cmp(&b.cx)));
    Scene { image: img, boxes }
}

fn draw_cone(img: &mut RgbImage, class_id: u32, cx: f64, top: f64, base: f64, half_w: f64, tint: f64) {
    let (body, stripe) = if class_id == BLUE_CONE {
        ([30.0 + tint, 70.0 + tint, 210.0 + tint], [235.0, 235.0, 235.0])
    } else {
        ([240.0, 200.0 + tint, 30.0 + tint], [35.0, 35.0, 35.0])
    };
    let plate = [50.0, 50.0, 55.0];
    let rows = base - top + 1.0;
    let plate_rows = (rows / 8.0).ceil().max(1.0);
    let (w, h) = img.dimensions();
    for yi in (top as i64)..=(base as i64) {
        if yi < 0 || yi >= h as i64 {
            continue;
        }
        let t = (yi as f64 - top + 0.5) / rows;
        let on_plate = (base - yi as f64) < plate_rows;
        let half = if on_plate { half_w + 1.0 } else { (t * half_w).max(0.5) };
        let x_lo = (cx - half).floor() as i64;
        let x_hi = (cx + half).ceil() as i64 - 1;
        for xi in x_lo..=x_hi {
            if xi < 0 || xi >= w as i64 {
                continue;
            }
            let color = if on_plate {
                plate
            } else {
                let shade = 0.85 + 0.3 * (xi as f64 - (cx - half)) / (2.0 * half).max(1.0);
                let base_c = if (0.45..0.62).contains(&t) { stripe } else { body };
                [base_c[0] * shade, base_c[1] * shade, base_c[2] * shade]
            };
            img.put_pixel(xi as u32, yi as u32, to_rgb(color));
        }
    }
}

fn to_rgb(c: [f64; 3]) -> Rgb<u8> {
    Rgb([
        c[0].round().clamp(0.0, 255.0) as u8,
        c[1].round().clamp(0.0, 255.0) as u8,
        c[2].round().clamp(0.0, 255.0) as u8,
    ])
}

/// Night rendering: desaturate, darken, tint towards blue, add sensor noise.
pub fn apply_night(img: &RgbImage, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 2.5).expect("valid sigma");
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let l = luma(p.0);
        let mut c = p.0.map(|v| 0.3 * (l + 0.35 * (v as f64 - l)));
        c.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        c[2] += 8.0;
        c[1] += 2.0;
        *p = to_rgb(c);
    }
    out
}

/// Droplet rendering: a handful of discs where the scene is box-blurred and
/// slightly brightened, as seen through water on the lens.
pub fn apply_droplets(img: &RgbImage, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = img.dimensions();
    let scale = w as f64 / 128.0;
    let blurred = box_blur(img, (4.0 * scale).round().max(1.0) as i64);
    let mut out = img.clone();
    let drops = rng.random_range(4..=9);
    for _ in 0..drops {
        let r = rng.random_range(5.0..14.0) * scale;
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let gain = rng.random_range(1.03..1.15);
        let lo_y = (cy - r).floor().max(0.0) as u32;
        let hi_y = ((cy + r).ceil() as u32).min(h - 1);
        let lo_x = (cx - r).floor().max(0.0) as u32;
        let hi_x = ((cx + r).ceil() as u32).min(w - 1);
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let d2 = (dx * dx + dy * dy) / (r * r);
                if d2 <= 1.0 {
                    let b = blurred.get_pixel(x, y).0;
                    let rim = if d2 > 0.8 { 0.85 } else { 1.0 };
                    let c = [
                        b[0] as f64 * gain * rim + 6.0,
                        b[1] as f64 * gain * rim + 6.0,
                        b[2] as f64 * gain * rim + 8.0,
                    ];
                    out.put_pixel(x, y, to_rgb(c));
                }
            }
        }
    }
    out
}

fn box_blur(img: &RgbImage, radius: i64) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            let mut n = 0.0;
            for yy in (y - radius).max(0)..=(y + radius).min(h - 1) {
                for xx in (x - radius).max(0)..=(x + radius).min(w - 1) {
                    let p = img.get_pixel(xx as u32, yy as u32).0;
                    acc[0] += p[0] as f64;
                    acc[1] += p[1] as f64;
                    acc[2] += p[2] as f64;
                    n += 1.0;
                }
            }
            out.put_pixel(x as u32, y as u32, to_rgb([acc[0] / n, acc[1] / n, acc[2] / n]));
        }
    }
    out
}

/// Renders scene `index` in the requested style.
pub fn render_styled(cfg: &SceneConfig, style: SceneStyle, index: usize) -> Scene {
    let scene = render_scene(cfg, index);
    let style_seed = seeding::mix(seeding::mix(cfg.seed, index as u64), 0x0005_eed0_f57e_1e00);
    let image = match style {
        SceneStyle::Sunny => scene.image,
        SceneStyle::Night => apply_night(&scene.image, style_seed),
        SceneStyle::Droplet => apply_droplets(&scene.image, style_seed),
    };
    Scene { image, boxes: scene.boxes }
}

/// Generates `cfg.count` scenes into `out_dir` (images/, labels/,
/// manifest.json, counts.json) and returns the dataset plus the count log.
pub fn generate_scenes(
    cfg: &SceneConfig,
    style: SceneStyle,
    name: &str,
    out_dir: &Path,
) -> Result<(Dataset, GeneratorLog), DatasetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    fs::create_dir_all(out_dir.join("images")).map_err(io(out_dir))?;
    fs::create_dir_all(out_dir.join("labels")).map_err(io(out_dir))?;

    let records = exec::map_range(cfg.count, |i| -> Result<ImageRecord, DatasetError> {
        let scene = render_styled(cfg, style, i);
        let id = scene_id(cfg.seed, i);
        let image_path = out_dir.join("images").join(format!("{id}.png"));
        let annotations_path = out_dir.join("labels").join(format!("{id}.txt"));
        save_png(&scene.image, &image_path)
            .map_err(|e| DatasetError::Validation(e.to_string()))?;
        let text = format_annotations(&scene.boxes);
        fs::write(&annotations_path, &text).map_err(io(&annotations_path))?;
        // Keep in-memory boxes identical to what a reload would produce.
        let annotations = parse_annotations(&text, &annotations_path)?;
        Ok(ImageRecord {
            id,
            image_path,
            annotations_path,
            width: cfg.width,
            height: cfg.height,
            annotations,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let log = GeneratorLog {
        seed: cfg.seed,
        style,
        images: records.len(),
        total_boxes: records.iter().map(|r| r.annotations.len()).sum(),
        boxes_per_image: records.iter().map(|r| (r.id.clone(), r.annotations.len())).collect(),
    };
    let mut meta = BTreeMap::new();
    meta.insert("generator".to_string(), "procedural-scenes".to_string());
    meta.insert("seed".to_string(), cfg.seed.to_string());
    meta.insert("style".to_string(), format!("{style:?}").to_lowercase());
    let ds = Dataset::new(name, style.condition(), cone_class_map(), records)?.with_metadata(meta);
    save_manifest(&ds, out_dir)?;
    let counts_path: PathBuf = out_dir.join(COUNTS_FILE);
    fs::write(&counts_path, serde_json::to_string_pretty(&log).expect("log serializes"))
        .map_err(io(&counts_path))?;
    Ok((ds, log))
}
