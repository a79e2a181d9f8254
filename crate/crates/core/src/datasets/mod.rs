//! Paired light-field datasets on disk, scene splits, patch sampling and a
//! synthetic degradation generator.
//!
//! A dataset root holds one directory per scene:
//!
//! ```text
//! <root>/<scene_id>/gt/view_{u}_{v}.png
//! <root>/<scene_id>/lr_x2/view_{u}_{v}.png
//! <root>/<scene_id>/lr_x4/view_{u}_{v}.png
//! ```
//!
//! Every scale directory of a scene has the same image size: LR views are
//! degraded versions of the GT views at full resolution, pixel-aligned.

mod degrade;
mod synthetic;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{
    load_lightfield, save_lightfield, view_file_name, Colorspace, LightField, ScaleTag,
    LYTRO_ANGULAR,
};

pub use degrade::{generate_synthetic_pair, Degradation, DegradationChain};
pub use synthetic::{synthetic_scene, uniform_disparity_field, SceneStyle};

/// File name of the scene index written next to a dataset.
pub const INDEX_FILE: &str = "scenes.json";
/// File name of the split manifest written next to a dataset.
pub const SPLITS_FILE: &str = "splits.json";

/// Scene ratios of the real-world benchmark's P subset (63/17/15 out of 95).
pub const P_RATIOS: [f64; 3] = [63.0 / 95.0, 17.0 / 95.0, 15.0 / 95.0];
/// Train/test ratios of the O subset (55/10 out of 65).
pub const O_RATIOS: [f64; 3] = [55.0 / 65.0, 0.0, 10.0 / 65.0];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub root: PathBuf,
    pub available_scales: BTreeSet<ScaleTag>,
    /// `(H, W)` shared by every available scale.
    pub spatial_size: (usize, usize),
}

impl SceneRecord {
    pub fn dir(&self, tag: ScaleTag) -> PathBuf {
        self.root.join(&self.scene_id).join(tag.dir_name())
    }

    pub fn has(&self, tag: ScaleTag) -> bool {
        self.available_scales.contains(&tag)
    }
}

/// Something wrong with one scene that indexing did not treat as fatal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexIssue {
    pub scene_id: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub scenes: Vec<SceneRecord>,
    /// Scenes left out (no complete GT) and partial scale directories.
    pub issues: Vec<IndexIssue>,
}

impl DatasetIndex {
    pub fn get(&self, scene_id: &str) -> Option<&SceneRecord> {
        self.scenes.iter().find(|r| r.scene_id == scene_id)
    }
}

/// Size of the complete view set in `dir`, or a description of what is wrong.
fn view_set_size(dir: &Path) -> std::result::Result<(usize, usize), String> {
    if !dir.is_dir() {
        return Err("missing".into());
    }
    let mut size = None;
    for u in 0..LYTRO_ANGULAR.0 {
        for v in 0..LYTRO_ANGULAR.1 {
            let path = dir.join(view_file_name(u, v));
            if !path.is_file() {
                return Err(format!("lacks {}", view_file_name(u, v)));
            }
            let (w, h) =
                image::image_dimensions(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let hw = (h as usize, w as usize);
            match size {
                None => size = Some(hw),
                Some(s) if s != hw => {
                    return Err(format!(
                        "{} is {}x{}, other views are {}x{}",
                        view_file_name(u, v),
                        hw.1,
                        hw.0,
                        s.1,
                        s.0
                    ))
                }
                _ => {}
            }
        }
    }
    Ok(size.expect("angular grid is non-empty"))
}

/// Scans `root` for scene directories. Scenes without a complete `gt/`
/// view set are left out and listed in [`DatasetIndex::issues`], as are
/// incomplete or mis-sized LR directories.
pub fn index_dataset(root: &Path) -> Result<DatasetIndex> {
    let mut dirs: Vec<(String, PathBuf)> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    dirs.sort();
    let mut index = DatasetIndex::default();
    for (scene_id, path) in dirs {
        let gt_size = match view_set_size(&path.join(ScaleTag::Gt.dir_name())) {
            Ok(s) => s,
            Err(detail) => {
                log::warn!("skipping scene {scene_id}: gt {detail}");
                index.issues.push(IndexIssue {
                    scene_id,
                    detail: format!("gt {detail}"),
                });
                continue;
            }
        };
        let mut available_scales = BTreeSet::from([ScaleTag::Gt]);
        for tag in [ScaleTag::LrX2, ScaleTag::LrX4] {
            let dir = path.join(tag.dir_name());
            if !dir.exists() {
                continue;
            }
            match view_set_size(&dir) {
                Ok(s) if s == gt_size => {
                    available_scales.insert(tag);
                }
                Ok(s) => index.issues.push(IndexIssue {
                    scene_id: scene_id.clone(),
                    detail: format!(
                        "{} is {}x{} but gt is {}x{}",
                        tag.dir_name(),
                        s.1,
                        s.0,
                        gt_size.1,
                        gt_size.0
                    ),
                }),
                Err(detail) => index.issues.push(IndexIssue {
                    scene_id: scene_id.clone(),
                    detail: format!("{} {detail}", tag.dir_name()),
                }),
            }
        }
        index.scenes.push(SceneRecord {
            scene_id,
            root: root.to_path_buf(),
            available_scales,
            spatial_size: gt_size,
        });
    }
    for issue in &index.issues {
        log::warn!("scene {}: {}", issue.scene_id, issue.detail);
    }
    if index.scenes.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(index)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_index(root: &Path, index: &DatasetIndex) -> Result<()> {
    write_json(&root.join(INDEX_FILE), index)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!(
                "unknown split {other:?}; expected train, val or test"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl SplitManifest {
    pub fn scenes(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_json(&root.join(SPLITS_FILE), self)
    }

    pub fn load(root: &Path) -> Result<Self> {
        read_json(&root.join(SPLITS_FILE))
    }
}

/// Scene counts for `total` scenes split by `ratios` (train, val, test).
/// Val and test are rounded; train takes the rest.
pub fn ratio_counts(total: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    let val = ((total as f64 * ratios[1]).round() as usize).min(total);
    let test = ((total as f64 * ratios[2]).round() as usize).min(total - val);
    (total - val - test, val, test)
}

/// Shuffles scene ids with `seed` and cuts them into `(train, val, test)`
/// counts. Scenes beyond the requested total join the training split so
/// the three lists always cover every record.
pub fn split_scenes(
    records: &[SceneRecord],
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<SplitManifest> {
    let (n_train, n_val, n_test) = counts;
    let want = n_train + n_val + n_test;
    if want > records.len() {
        return Err(Error::Split(format!(
            "{n_train} + {n_val} + {n_test} = {want} scenes requested but only {} available",
            records.len()
        )));
    }
    let mut ids: Vec<String> = records.iter().map(|r| r.scene_id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != records.len() {
        return Err(Error::Split("duplicate scene ids".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ids.split_off(ids.len() - n_test);
    let val = ids.split_off(ids.len() - n_val);
    Ok(SplitManifest {
        train: ids,
        val,
        test,
        seed,
    })
}

/// One scene loaded as Y-channel LR/GT light fields.
#[derive(Clone, Debug)]
pub struct ScenePair {
    pub scene_id: String,
    pub lr: LightField,
    pub gt: LightField,
}

/// Loads the LR field at `scale` and the GT field of one scene.
pub fn load_pair(
    record: &SceneRecord,
    scale: u32,
    colorspace: Colorspace,
) -> Result<(LightField, LightField)> {
    let tag = ScaleTag::for_scale(scale)?;
    if !record.has(tag) {
        return Err(Error::Data(format!(
            "scene {} has no {} views",
            record.scene_id,
            tag.dir_name()
        )));
    }
    let lr = load_lightfield(&record.dir(tag), colorspace)?.with_tag(tag);
    let gt = load_lightfield(&record.dir(ScaleTag::Gt), colorspace)?;
    Ok((lr, gt))
}

/// Loads every scene of `split` at `scale` in Y.
pub fn load_split(
    index: &DatasetIndex,
    manifest: &SplitManifest,
    split: Split,
    scale: u32,
) -> Result<Vec<ScenePair>> {
    manifest
        .scenes(split)
        .iter()
        .map(|id| {
            let record = index.get(id).ok_or_else(|| {
                Error::Data(format!("split lists scene {id} which is not in the index"))
            })?;
            let (lr, gt) = load_pair(record, scale, Colorspace::Y)?;
            Ok(ScenePair {
                scene_id: id.clone(),
                lr,
                gt,
            })
        })
        .collect()
}

/// One training patch pair and where it was cut from.
#[derive(Clone, Debug)]
pub struct Sample {
    pub scene_id: String,
    pub y0: usize,
    pub x0: usize,
    pub lr: LightField,
    pub gt: LightField,
}

/// Draws `batch` aligned `(lr, gt)` patches: a uniformly random scene and
/// window per sample, the same window in both fields.
pub fn sample_batch(
    scenes: &[ScenePair],
    patch: usize,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample>> {
    if scenes.is_empty() {
        return Err(Error::Split("cannot sample from an empty split".into()));
    }
    if let Some(s) = scenes.iter().find(|s| {
        let (h, w) = s.gt.spatial_size();
        patch > h.min(w)
    }) {
        return Err(Error::size(format!(
            "patch {patch} exceeds scene {} of size {:?}",
            s.scene_id,
            s.gt.spatial_size()
        )));
    }
    (0..batch)
        .map(|_| {
            let scene = &scenes[rng.gen_range(0..scenes.len())];
            let (h, w) = scene.gt.spatial_size();
            let y0 = rng.gen_range(0..=h - patch);
            let x0 = rng.gen_range(0..=w - patch);
            Ok(Sample {
                scene_id: scene.scene_id.clone(),
                y0,
                x0,
                lr: scene.lr.extract_patch(y0, x0, patch)?,
                gt: scene.gt.extract_patch(y0, x0, patch)?,
            })
        })
        .collect()
}

/// Writes a GT field and its LR counterparts as one scene directory.
pub fn write_scene(
    root: &Path,
    scene_id: &str,
    gt: &LightField,
    lrs: &[(ScaleTag, &LightField)],
) -> Result<()> {
    let dir = root.join(scene_id);
    save_lightfield(gt, &dir.join(ScaleTag::Gt.dir_name()))?;
    for (tag, lr) in lrs {
        if lr.spatial_size() != gt.spatial_size() || lr.angular_size() != gt.angular_size() {
            return Err(Error::size(format!(
                "{} views of {scene_id} differ in size from gt",
                tag.dir_name()
            )));
        }
        save_lightfield(lr, &dir.join(tag.dir_name()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> SceneRecord {
        SceneRecord {
            scene_id: id.into(),
            root: PathBuf::from("/data"),
            available_scales: BTreeSet::from([ScaleTag::Gt]),
            spatial_size: (8, 8),
        }
    }

    fn records(n: usize) -> Vec<SceneRecord> {
        (0..n).map(|i| record(&format!("scene_{i:03}"))).collect()
    }

    #[test]
    fn split_is_disjoint_covering_and_seeded() {
        let recs = records(10);
        let m = split_scenes(&recs, (8, 0, 2), 7).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (8, 0, 2));
        let mut all: Vec<_> = m
            .train
            .iter()
            .chain(&m.val)
            .chain(&m.test)
            .cloned()
            .collect();
        all.sort();
        assert_eq!(
            all,
            recs.iter().map(|r| r.scene_id.clone()).collect::<Vec<_>>()
        );
        assert_eq!(m, split_scenes(&recs, (8, 0, 2), 7).unwrap());
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(m, split_scenes(&reversed, (8, 0, 2), 7).unwrap());
        assert_ne!(m, split_scenes(&recs, (8, 0, 2), 8).unwrap());
    }

    #[test]
    fn literal_benchmark_counts_overflow() {
        assert_eq!(63 + 17 + 15, 95);
        assert!(matches!(
            split_scenes(&records(94), (63, 17, 15), 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn leftovers_join_train() {
        let m = split_scenes(&records(10), (5, 1, 2), 3).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (7, 1, 2));
    }

    #[test]
    fn ratio_counts_cover_total() {
        assert_eq!(ratio_counts(95, P_RATIOS), (63, 17, 15));
        assert_eq!(ratio_counts(65, O_RATIOS), (55, 0, 10));
        for n in 0..50 {
            let (a, b, c) = ratio_counts(n, P_RATIOS);
            assert_eq!(a + b + c, n);
        }
    }

    #[test]
    fn split_names_parse() {
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
    }
}
