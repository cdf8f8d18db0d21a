//! Checkpoint directories: config snapshot, parameter and optimizer blobs,
//! RNG position, replay pools and the loss history.

use std::fs;
use std::path::{Path, PathBuf};

use advaug_core::nn::{read_f64_blob, write_f64_blob, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::GanConfig;
use crate::model::CycleModels;
use crate::train::{GanTrainState, ImagePool, LossRecord};
use crate::GanError;

pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "state.json";
pub const HISTORY_FILE: &str = "loss_history.csv";

/// Handle to a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub path: PathBuf,
    pub epoch: usize,
    /// Hash of both generators' parameters.
    pub id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateDoc {
    id: String,
    epoch: usize,
    step: u64,
    adam_steps: [u64; 4],
    rng_seed: String,
    rng_stream: u64,
    /// `u128` does not survive every JSON reader, so it is kept as text.
    rng_word_pos: String,
    pool_a: usize,
    pool_b: usize,
}

const NETS: [&str; 4] = ["g_ab", "g_ba", "d_a", "d_b"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GanError + '_ {
    move |source| GanError::Io { path: path.to_path_buf(), source }
}

fn ckpt_err(path: &Path, message: impl Into<String>) -> GanError {
    GanError::Checkpoint { path: path.to_path_buf(), message: message.into() }
}

pub fn generator_id(models: &CycleModels) -> String {
    let mut h = Sha256::new();
    for v in models.g_ab.params.iter().chain(&models.g_ba.params) {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn flatten(pool: &ImagePool) -> Vec<f64> {
    pool.images.iter().flatten().copied().collect()
}

fn write_history(path: &Path, history: &[LossRecord]) -> Result<(), GanError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ckpt_err(path, e.to_string()))?;
    if history.is_empty() {
        w.write_record(["epoch", "step", "adv_g", "adv_d", "cycle_a", "cycle_b", "identity_a", "identity_b", "total_g"])
            .map_err(|e| ckpt_err(path, e.to_string()))?;
    }
    for r in history {
        w.serialize(r).map_err(|e| ckpt_err(path, e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_history(path: &Path) -> Result<Vec<LossRecord>, GanError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ckpt_err(path, e.to_string()))?;
    r.deserialize().map(|rec| rec.map_err(|e| ckpt_err(path, e.to_string()))).collect()
}

fn write_all(state: &GanTrainState, dir: &Path) -> Result<(), GanError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = &state.models;
    let nets = [&m.g_ab, &m.g_ba, &m.d_a, &m.d_b];
    let opts = [&state.opt_g_ab, &state.opt_g_ba, &state.opt_d_a, &state.opt_d_b];
    for ((name, net), opt) in NETS.iter().zip(nets).zip(opts) {
        write_f64_blob(&dir.join(format!("{name}.bin")), &net.params)?;
        write_f64_blob(&dir.join(format!("adam_{name}.bin")), &opt.moments())?;
    }
    write_f64_blob(&dir.join("pool_a.bin"), &flatten(&state.pool_a))?;
    write_f64_blob(&dir.join("pool_b.bin"), &flatten(&state.pool_b))?;
    let doc = StateDoc {
        id: generator_id(m),
        epoch: state.epoch,
        step: state.step,
        adam_steps: opts.map(|o| o.t),
        rng_seed: hex::encode(state.rng.get_seed()),
        rng_stream: state.rng.get_stream(),
        rng_word_pos: state.rng.get_word_pos().to_string(),
        pool_a: state.pool_a.images.len(),
        pool_b: state.pool_b.images.len(),
    };
    let write_json = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))
    };
    write_json(CONFIG_FILE, serde_json::to_string_pretty(&state.config).expect("config serializes"))?;
    write_json(STATE_FILE, serde_json::to_string_pretty(&doc).expect("state serializes"))?;
    write_history(&dir.join(HISTORY_FILE), &state.history)
}

/// Writes the state into `dir`, replacing any previous content. The files go
/// to a sibling temporary directory first, which is renamed on success and
/// removed on failure.
pub fn save_checkpoint(state: &GanTrainState, dir: &Path) -> Result<CheckpointRef, GanError> {
    let name = dir.file_name().ok_or_else(|| ckpt_err(dir, "checkpoint path has no file name"))?;
    let tmp = dir.with_file_name(format!(".{}.partial", name.to_string_lossy()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    if let Err(e) = write_all(state, &tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::rename(&tmp, dir).map_err(io_err(dir))?;
    Ok(CheckpointRef { path: dir.to_path_buf(), epoch: state.epoch, id: generator_id(&state.models) })
}

pub fn load_config(dir: &Path) -> Result<GanConfig, GanError> {
    let p = dir.join(CONFIG_FILE);
    if !p.exists() {
        return Err(ckpt_err(dir, "missing config.json (not a checkpoint directory?)"));
    }
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| ckpt_err(&p, e.to_string()))
}

pub(crate) fn load_network(dir: &Path, name: &str, template: &Network) -> Result<Network, GanError> {
    let params = read_f64_blob(&dir.join(format!("{name}.bin")))?;
    if params.len() != template.param_count() {
        return Err(ckpt_err(
            dir,
            format!("{name}: {} parameters, architecture expects {}", params.len(), template.param_count()),
        ));
    }
    Ok(template.with_params(params))
}

fn unflatten(dir: &Path, name: &str, count: usize, capacity: usize) -> Result<ImagePool, GanError> {
    let flat = read_f64_blob(&dir.join(name))?;
    if count == 0 {
        return Ok(ImagePool::new(capacity));
    }
    if flat.len() % count != 0 {
        return Err(ckpt_err(dir, format!("{name}: inconsistent pool size")));
    }
    let per = flat.len() / count;
    Ok(ImagePool { capacity, images: flat.chunks(per).map(|c| c.to_vec()).collect() })
}

pub fn load_checkpoint(dir: &Path) -> Result<GanTrainState, GanError> {
    let config = load_config(dir)?;
    let mut state = GanTrainState::new(config)?;
    let p = dir.join(STATE_FILE);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let doc: StateDoc = serde_json::from_str(&text).map_err(|e| ckpt_err(&p, e.to_string()))?;

    let m = &mut state.models;
    for (name, net) in NETS.iter().zip([&mut m.g_ab, &mut m.g_ba, &mut m.d_a, &mut m.d_b]) {
        *net = load_network(dir, name, net)?;
    }
    let opts = [&mut state.opt_g_ab, &mut state.opt_g_ba, &mut state.opt_d_a, &mut state.opt_d_b];
    for ((name, opt), t) in NETS.iter().zip(opts).zip(doc.adam_steps) {
        let moments = read_f64_blob(&dir.join(format!("adam_{name}.bin")))?;
        if !opt.set_moments(t, &moments) {
            return Err(ckpt_err(dir, format!("adam_{name}: wrong length")));
        }
    }
    let seed: [u8; 32] = hex::decode(&doc.rng_seed)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| ckpt_err(&p, "bad rng seed"))?;
    let word_pos: u128 = doc.rng_word_pos.parse().map_err(|_| ckpt_err(&p, "bad rng position"))?;
    state.rng = ChaCha8Rng::from_seed(seed);
    state.rng.set_stream(doc.rng_stream);
    state.rng.set_word_pos(word_pos);
    let cap = state.config.replay_pool;
    state.pool_a = unflatten(dir, "pool_a.bin", doc.pool_a, cap)?;
    state.pool_b = unflatten(dir, "pool_b.bin", doc.pool_b, cap)?;
    state.epoch = doc.epoch;
    state.step = doc.step;
    state.history = read_history(&dir.join(HISTORY_FILE))?;
    if generator_id(&state.models) != doc.id {
        return Err(ckpt_err(dir, "generator parameters do not match the recorded id"));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use advaug_core::nn::Tensor;
    use rand::Rng;

    #[test]
    fn round_trip_restores_everything() {
        let cfg = GanConfig { resolution: 8, batch_size: 2, base_channels: 2, residual_blocks: 1, replay_pool: 3, ..GanConfig::desk() };
        let mut state = GanTrainState::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut batch = || Tensor::from_vec(2, 3, 8, 8, (0..384).map(|_| rng.random_range(-1.0..1.0)).collect());
        let (a, b) = (batch(), batch());
        state.train_step(&a, &b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let r = save_checkpoint(&state, &dir.path().join("ck")).unwrap();
        let mut back = load_checkpoint(&r.path).unwrap();
        assert_eq!(back.models, state.models);
        assert_eq!(back.history, state.history);
        assert_eq!(back.pool_b, state.pool_b);
        assert_eq!(back.opt_d_a, state.opt_d_a);
        let x = state.train_step(&b, &a).unwrap();
        let y = back.train_step(&b, &a).unwrap();
        assert_eq!(x, y);
        assert!(!dir.path().join(".ck.partial").exists());
    }

    #[test]
    fn missing_directory_is_a_checkpoint_error() {
        let err = load_checkpoint(Path::new("/nonexistent/ck")).unwrap_err();
        assert!(matches!(err, GanError::Checkpoint { .. }));
    }
}
