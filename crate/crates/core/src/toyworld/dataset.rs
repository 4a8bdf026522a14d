//! Dataset container: named float32 arrays plus a JSON manifest.
//!
//! One file holds `video` (n, T_v, d_v), `audio` (n, T_a, d_a), `cond` (n, C)
//! as float32 and the ragged event times as `event_offsets` (n+1 u32) +
//! `event_times` (f32). Byte layout in docs/FORMATS.md.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventSchedule, Modality, ModalityTrack, PairSample, WorldConfig};
use crate::arrayio::{read_container, write_container, Container, NamedArray};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const DATASET_MAGIC: &[u8; 8] = b"SYNCDS01";

/// Manifest embedded in the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub n: usize,
    pub rates: (f64, f64),
    pub duration: f64,
    pub classes: usize,
    pub video_channels: usize,
    pub audio_channels: usize,
}

impl DatasetManifest {
    /// Reconstruct the world parameters this dataset was rendered with.
    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            duration: self.duration,
            video_rate: self.rates.0,
            video_channels: self.video_channels,
            audio_rate: self.rates.1,
            audio_channels: self.audio_channels,
            classes: self.classes,
            ..WorldConfig::default()
        }
    }
}

/// An in-memory dataset of synchronized pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: DatasetManifest,
    pairs: Vec<PairSample>,
}

impl Dataset {
    pub fn new(cfg: WorldConfig, seed: u64, pairs: Vec<PairSample>) -> Self {
        let manifest = DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            seed,
            n: pairs.len(),
            rates: (cfg.video_rate, cfg.audio_rate),
            duration: cfg.duration,
            classes: cfg.classes,
            video_channels: cfg.video_channels,
            audio_channels: cfg.audio_channels,
        };
        Dataset { manifest, pairs }
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn pairs(&self) -> &[PairSample] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let cfg = self.manifest.world_config();
        let n = self.pairs.len();
        let (vt, vc) = (cfg.video_len(), cfg.video_channels);
        let (at, ac) = (cfg.audio_len(), cfg.audio_channels);

        let mut video = Vec::with_capacity(n * vt * vc);
        let mut audio = Vec::with_capacity(n * at * ac);
        let mut cond = Vec::with_capacity(n * cfg.classes);
        let mut event_offsets = Vec::with_capacity(n + 1);
        let mut event_times = Vec::new();
        event_offsets.push(0u32);
        for pair in &self.pairs {
            video.extend_from_slice(&pair.video.samples);
            audio.extend_from_slice(&pair.audio.samples);
            cond.extend_from_slice(&pair.condition);
            event_times.extend(pair.schedule.event_times.iter().map(|&t| t as f32));
            event_offsets.push(event_times.len() as u32);
        }

        let mut arrays = BTreeMap::new();
        arrays.insert(
            "video".to_string(),
            NamedArray::f32(vec![n as u32, vt as u32, vc as u32], video),
        );
        arrays.insert(
            "audio".to_string(),
            NamedArray::f32(vec![n as u32, at as u32, ac as u32], audio),
        );
        arrays.insert(
            "cond".to_string(),
            NamedArray::f32(vec![n as u32, cfg.classes as u32], cond),
        );
        arrays.insert(
            "event_offsets".to_string(),
            NamedArray::u32(vec![n as u32 + 1], event_offsets),
        );
        let n_times = event_times.len() as u32;
        arrays.insert(
            "event_times".to_string(),
            NamedArray::f32(vec![n_times], event_times),
        );

        let container = Container {
            header_json: serde_json::to_string(&self.manifest)
                .map_err(|e| Error::Format(e.to_string()))?,
            arrays,
        };
        write_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION, &container)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let container = read_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION)?;
        let manifest: DatasetManifest = serde_json::from_str(&container.header_json)
            .map_err(|e| Error::Format(format!("{}: bad manifest: {e}", path.display())))?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: unknown manifest format_version {}",
                path.display(),
                manifest.format_version
            )));
        }
        let cfg = manifest.world_config();
        let n = manifest.n;
        let get = |name: &str| -> Result<&NamedArray> {
            container
                .arrays
                .get(name)
                .ok_or_else(|| Error::Format(format!("{}: missing array {name}", path.display())))
        };
        let video = get("video")?;
        let audio = get("audio")?;
        let cond = get("cond")?;
        let offsets = get("event_offsets")?.as_u32()?;
        let times = get("event_times")?.as_f32()?;

        let (vt, vc) = (cfg.video_len(), cfg.video_channels);
        let (at, ac) = (cfg.audio_len(), cfg.audio_channels);
        if video.dims != [n as u32, vt as u32, vc as u32] {
            return Err(Error::Format(format!(
                "{}: video dims {:?} do not match manifest",
                path.display(),
                video.dims
            )));
        }
        if audio.dims != [n as u32, at as u32, ac as u32] {
            return Err(Error::Format(format!(
                "{}: audio dims {:?} do not match manifest",
                path.display(),
                audio.dims
            )));
        }
        if offsets.len() != n + 1 {
            return Err(Error::Format(format!(
                "{}: event_offsets length {} != n+1",
                path.display(),
                offsets.len()
            )));
        }

        let video_data = video.as_f32()?;
        let audio_data = audio.as_f32()?;
        let cond_data = cond.as_f32()?;
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            let condition = cond_data[i * cfg.classes..(i + 1) * cfg.classes].to_vec();
            let class_id = condition
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(idx, _)| idx)
                .unwrap_or(0);
            let (lo, hi) = (offsets[i] as usize, offsets[i + 1] as usize);
            let schedule = EventSchedule {
                class_id,
                event_times: times[lo..hi].iter().map(|&t| t as f64).collect(),
                duration: cfg.duration,
            };
            pairs.push(PairSample {
                video: ModalityTrack {
                    samples: video_data[i * vt * vc..(i + 1) * vt * vc].to_vec(),
                    len: vt,
                    channels: vc,
                    rate: cfg.video_rate,
                    modality: Modality::Video,
                },
                audio: ModalityTrack {
                    samples: audio_data[i * at * ac..(i + 1) * at * ac].to_vec(),
                    len: at,
                    channels: ac,
                    rate: cfg.audio_rate,
                    modality: Modality::Audio,
                },
                condition,
                schedule,
            });
        }
        Ok(Dataset { manifest, pairs })
    }

    /// Load and verify the manifest seed against an expected value.
    pub fn load_with_seed(path: &Path, expected_seed: u64) -> Result<Self> {
        let ds = Self::load(path)?;
        if ds.manifest.seed != expected_seed {
            return Err(Error::Format(format!(
                "{}: manifest seed {} does not match expected {}",
                path.display(),
                ds.manifest.seed,
                expected_seed
            )));
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::toyworld::World;

    #[test]
    fn round_trip_equals_regeneration() {
        let world = World::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.syncds");
        world
            .make_dataset(&mut stream(77, "data"), 100, 77, &path)
            .unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(loaded.len(), 100);
        assert_eq!(loaded.manifest().seed, 77);

        let regenerated: Vec<_> = {
            let mut rng = stream(77, "data");
            (0..100).map(|_| world.make_pair(&mut rng)).collect()
        };
        for (a, b) in loaded.pairs().iter().zip(&regenerated) {
            assert_eq!(a.video.samples, b.video.samples);
            assert_eq!(a.audio.samples, b.audio.samples);
            assert_eq!(a.condition, b.condition);
            assert_eq!(a.schedule.class_id, b.schedule.class_id);
            // Event times pass through f32 on disk.
            for (x, y) in a.schedule.event_times.iter().zip(&b.schedule.event_times) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn seed_mismatch_is_an_error() {
        let world = World::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.syncds");
        world
            .make_dataset(&mut stream(1, "data"), 4, 1, &path)
            .unwrap();
        assert!(Dataset::load_with_seed(&path, 1).is_ok());
        let err = Dataset::load_with_seed(&path, 2).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_format_version_rejected() {
        let world = World::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.syncds");
        world
            .make_dataset(&mut stream(2, "data"), 2, 2, &path)
            .unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99; // version field follows the 8-byte magic
        std::fs::write(&path, bytes).unwrap();
        let err = Dataset::load(&path).unwrap_err();
        assert!(err.to_string().contains("format_version"));
    }

    #[test]
    fn zero_size_rejected() {
        let world = World::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.syncds");
        assert!(world
            .make_dataset(&mut stream(3, "data"), 0, 3, &path)
            .is_err());
    }

    #[test]
    fn different_seeds_give_disjoint_schedules() {
        let world = World::default();
        let a: Vec<_> = {
            let mut rng = stream(100, "data");
            (0..50).map(|_| world.make_pair(&mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = stream(101, "data");
            (0..50).map(|_| world.make_pair(&mut rng)).collect()
        };
        let shared = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x.schedule.event_times == y.schedule.event_times)
            .count();
        assert_eq!(shared, 0);
    }
}
