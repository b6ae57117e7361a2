//! Checkpoint directories.
//!
//! Layout: `g0.arrays`, `g1.arrays`, `d.arrays` (safetensors containers of
//! little-endian f32 arrays with shape/dtype headers) and `meta.json`.
//! Array names are prefixed `param/`, `buffer/`, `adam_m/` and `adam_v/`.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AblationMode, TrainConfig};
use crate::error::{Error, Result};
use crate::networks::{Grads, LayerSpec, NetworkParams};
use crate::optim::AdamState;

pub const CHECKPOINT_VERSION: u32 = 1;
const CONTAINER_FORMAT: &str = "resface-arrays";

pub const NETWORK_FILES: [&str; 3] = ["g0.arrays", "g1.arrays", "d.arrays"];
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: TrainConfig,
    pub mode: AblationMode,
    pub iteration: u64,
    /// Root generator state after the last completed step.
    pub rng: ChaCha8Rng,
    pub rng_digest: String,
    /// Adam step counters for G0, G1, D when moments are stored.
    pub adam_steps: Option<[u64; 3]>,
}

impl CheckpointMeta {
    pub fn new(config: TrainConfig, mode: AblationMode, iteration: u64, rng: ChaCha8Rng, adam_steps: Option<[u64; 3]>) -> Self {
        let rng_digest = rng_digest(&rng);
        CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            config,
            mode,
            iteration,
            rng,
            rng_digest,
            adam_steps,
        }
    }
}

pub fn rng_digest(rng: &ChaCha8Rng) -> String {
    let bytes = serde_json::to_vec(rng).expect("rng state serializes");
    hex(&Sha256::digest(&bytes))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parameters of one network plus its optional Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub params: NetworkParams<f32>,
    pub adam: Option<AdamState<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub g0: NetworkState,
    pub g1: NetworkState,
    pub d: NetworkState,
}

impl Checkpoint {
    pub fn networks(&self) -> [&NetworkState; 3] {
        [&self.g0, &self.g1, &self.d]
    }

    fn layer_specs(config: &TrainConfig) -> Result<[Vec<LayerSpec>; 3]> {
        let g = config.generator_spec()?.layers();
        let d = config.discriminator_spec()?.layers();
        Ok([g.clone(), g, d])
    }
}

fn to_bytes(a: &ArrayD<f32>) -> Vec<u8> {
    a.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn write_container(path: &Path, net: &NetworkState) -> Result<()> {
    let mut entries: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    let mut push = |prefix: &str, map: &IndexMap<String, ArrayD<f32>>| {
        for (k, v) in map {
            entries.push((format!("{prefix}/{k}"), v.shape().to_vec(), to_bytes(v)));
        }
    };
    push("param", &net.params.learnable);
    push("buffer", &net.params.buffers);
    if let Some(adam) = &net.adam {
        push("adam_m", &adam.m);
        push("adam_v", &adam.v);
    }
    let views = entries
        .iter()
        .map(|(name, shape, data)| {
            TensorView::new(Dtype::F32, shape.clone(), data)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::checkpoint(path, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    // A single entry: the container writer iterates a hash map, and one key keeps the bytes stable.
    let info = Some(HashMap::from([(
        "format".to_string(),
        format!("{CONTAINER_FORMAT}/{CHECKPOINT_VERSION}"),
    )]));
    safetensors::serialize_to_file(views, &info, path).map_err(|e| Error::checkpoint(path, e.to_string()))
}

fn read_container(path: &Path, layers: &[LayerSpec], with_adam: bool, adam_step: u64) -> Result<NetworkState> {
    let bytes = std::fs::read(path).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    let tensors = SafeTensors::deserialize(&bytes).map_err(|e| Error::checkpoint(path, format!("corrupt container: {e}")))?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    let info = header.metadata().clone().unwrap_or_default();
    let tag = info.get("format").and_then(|f| f.split_once('/'));
    let Some((format, version)) = tag.filter(|(f, _)| *f == CONTAINER_FORMAT) else {
        return Err(Error::checkpoint(path, "not a parameter container"));
    };
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(Error::checkpoint(path, format!("{format} version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let fetch = |name: &str, like: &ArrayD<f32>| -> Result<ArrayD<f32>> {
        let view = tensors
            .tensor(name)
            .map_err(|_| Error::checkpoint(path, format!("missing array {name}")))?;
        if view.dtype() != Dtype::F32 {
            return Err(Error::checkpoint(path, format!("{name}: dtype {:?}, expected F32", view.dtype())));
        }
        if view.shape() != like.shape() {
            return Err(Error::checkpoint(
                path,
                format!("{name}: shape {:?}, expected {:?}", view.shape(), like.shape()),
            ));
        }
        let data: Vec<f32> = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        ArrayD::from_shape_vec(IxDyn(view.shape()), data).map_err(|e| Error::checkpoint(path, e.to_string()))
    };
    let reference = NetworkParams::<f32>::init(layers, 0);
    let load_map = |prefix: &str, like: &IndexMap<String, ArrayD<f32>>| -> Result<IndexMap<String, ArrayD<f32>>> {
        like.iter()
            .map(|(k, v)| Ok((k.clone(), fetch(&format!("{prefix}/{k}"), v)?)))
            .collect()
    };
    let params = NetworkParams {
        learnable: load_map("param", &reference.learnable)?,
        buffers: load_map("buffer", &reference.buffers)?,
    };
    let expected = params.learnable.len() + params.buffers.len() + if with_adam { 2 * params.learnable.len() } else { 0 };
    if tensors.len() != expected {
        return Err(Error::checkpoint(path, format!("{} arrays, expected {expected}", tensors.len())));
    }
    let adam = if with_adam {
        let m: Grads<f32> = load_map("adam_m", &reference.learnable)?;
        let v: Grads<f32> = load_map("adam_v", &reference.learnable)?;
        Some(AdamState { step: adam_step, m, v })
    } else {
        None
    };
    Ok(NetworkState { params, adam })
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::checkpoint(dir, e.to_string()))?;
    for (file, net) in NETWORK_FILES.iter().zip(ckpt.networks()) {
        write_container(&dir.join(file), net)?;
    }
    let meta = serde_json::to_string_pretty(&ckpt.meta)?;
    std::fs::write(dir.join(META_FILE), meta).map_err(|e| Error::checkpoint(dir, e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::checkpoint(&meta_path, e.to_string()))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::checkpoint(&meta_path, format!("invalid metadata: {e}")))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(Error::checkpoint(
            &meta_path,
            format!("format version {version:?}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let meta: CheckpointMeta =
        serde_json::from_value(raw).map_err(|e| Error::checkpoint(&meta_path, format!("invalid metadata: {e}")))?;
    if rng_digest(&meta.rng) != meta.rng_digest {
        return Err(Error::checkpoint(&meta_path, "rng digest mismatch"));
    }
    meta.config.validate()?;
    let layers = Checkpoint::layer_specs(&meta.config)?;
    let steps = meta.adam_steps;
    let load = |i: usize| read_container(&dir.join(NETWORK_FILES[i]), &layers[i], steps.is_some(), steps.map_or(0, |s| s[i]));
    let g0 = load(0)?;
    let g1 = load(1)?;
    let d = load(2)?;
    Ok(Checkpoint { meta, g0, g1, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AttributeScope;
    use rand::SeedableRng;

    fn sample(with_adam: bool) -> Checkpoint {
        let mut config = TrainConfig::desk("glasses", AttributeScope::Local);
        config.width_divisor = 16;
        let [g, _, d] = Checkpoint::layer_specs(&config).unwrap();
        let net = |layers: &[LayerSpec], seed| {
            let params = NetworkParams::<f32>::init(layers, seed);
            let adam = with_adam.then(|| {
                let mut a = AdamState::new(&params);
                a.step = 3;
                for m in a.m.values_mut() {
                    m.fill(0.25);
                }
                a
            });
            NetworkState { params, adam }
        };
        Checkpoint {
            meta: CheckpointMeta::new(
                config,
                AblationMode::Full,
                3,
                ChaCha8Rng::seed_from_u64(9),
                with_adam.then_some([3, 3, 3]),
            ),
            g0: net(&g, 1),
            g1: net(&g, 2),
            d: net(&d, 3),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for with_adam in [false, true] {
            let c = sample(with_adam);
            let path = dir.path().join(format!("ck{with_adam}"));
            save_checkpoint(&c, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back, c);
            for (a, b) in back.networks().iter().zip(c.networks()) {
                for (k, v) in &a.params.learnable {
                    let bits: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
                    let want: Vec<u32> = b.params.learnable[k].iter().map(|x| x.to_bits()).collect();
                    assert_eq!(bits, want);
                }
            }
        }
    }

    #[test]
    fn missing_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn truncated_container_errors() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&sample(true), dir.path()).unwrap();
        let f = dir.path().join("d.arrays");
        let bytes = std::fs::read(&f).unwrap();
        std::fs::write(&f, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint { .. })));
        std::fs::write(&f, b"garbage").unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn version_mismatch_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = sample(false);
        c.meta.format_version = 99;
        save_checkpoint(&c, dir.path()).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("format version"));
    }

    #[test]
    fn tampered_rng_state_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = sample(false);
        c.meta.rng_digest = "00".into();
        save_checkpoint(&c, dir.path()).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
