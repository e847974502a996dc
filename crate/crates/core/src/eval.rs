//! Mean-IoU evaluation with void handling and the frequent-class subset.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::imaging::io::{list_pngs, read_labels};
use crate::imaging::SemanticLabeling;

pub const CITYSCAPES_CLASSES: [&str; 19] = [
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light", "traffic sign", "vegetation",
    "terrain", "sky", "person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle",
];
pub const CITYSCAPES_VOID: u32 = 255;

/// Road, sidewalk, building, wall, fence, pole, traffic light, traffic
/// sign, vegetation, sky and car, as Cityscapes trainIds.
pub const FREQUENT_CLASSES: [u32; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 13];

/// Class ids are `0..names.len()`; `void_id` marks unlabeled pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDefinition {
    pub names: Vec<String>,
    pub void_id: u32,
    #[serde(default)]
    pub frequent: Option<Vec<u32>>,
}

impl Default for ClassDefinition {
    fn default() -> Self {
        Self {
            names: CITYSCAPES_CLASSES.iter().map(|s| s.to_string()).collect(),
            void_id: CITYSCAPES_VOID,
            frequent: Some(FREQUENT_CLASSES.to_vec()),
        }
    }
}

impl ClassDefinition {
    pub fn num_classes(&self) -> u32 {
        self.names.len() as u32
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_classes();
        if n == 0 {
            return Err(Error::InvalidParameter("class definition lists no classes".into()));
        }
        if self.void_id < n {
            return Err(Error::InvalidParameter(format!("void id {} collides with a class id", self.void_id)));
        }
        if let Some(f) = &self.frequent {
            if let Some(bad) = f.iter().find(|&&c| c >= n) {
                return Err(Error::InvalidParameter(format!("frequent class {bad} is not a class id")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let def: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        def.validate()?;
        Ok(def)
    }
}

/// `counts[g * C + p]` = pixels with ground truth `g` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: u32,
    void_id: u32,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: u32, void_id: u32) -> Self {
        let c = num_classes as usize;
        Self { num_classes, void_id, counts: vec![0; c * c] }
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn get(&self, gt: u32, pred: u32) -> u64 {
        self.counts[(gt * self.num_classes + pred) as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds every non-void ground-truth pixel. Predictions must not be void.
    pub fn accumulate(&mut self, gt: &SemanticLabeling, pred: &SemanticLabeling) -> Result<()> {
        check_dims("prediction vs ground truth", gt.dims(), pred.dims())?;
        let c = self.num_classes;
        let range_err = |source_name: &str, id| Error::LabelOutOfRange {
            source_name: source_name.into(),
            id,
            num_classes: c,
            void_id: self.void_id,
        };
        // validate first so a failed call leaves the matrix untouched
        for (i, (&g, &p)) in gt.labels().iter().zip(pred.labels()).enumerate() {
            if p == self.void_id {
                return Err(Error::VoidInPrediction(i));
            }
            if p >= c {
                return Err(range_err("prediction", p));
            }
            if g >= c && g != self.void_id {
                return Err(range_err("ground truth", g));
            }
        }
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            if g != self.void_id {
                self.counts[(g * c + p) as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes || other.void_id != self.void_id {
            return Err(Error::InvalidParameter("confusion matrices use different class sets".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class: u32,
    pub name: String,
    /// `None` when the class is absent from both ground truth and prediction.
    pub iou: Option<f64>,
}

/// IoU values are fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub mean_iou: f64,
    pub classes_in_mean: usize,
    pub per_class: Vec<ClassIou>,
}

fn class_name(names: Option<&[String]>, c: u32) -> String {
    names.and_then(|n| n.get(c as usize)).cloned().unwrap_or_else(|| c.to_string())
}

/// Mean of `TP / (TP + FP + FN)` over classes (optionally restricted to
/// `subset`) with a nonzero union.
pub fn mean_iou(cm: &ConfusionMatrix, subset: Option<&[u32]>) -> Result<IouReport> {
    mean_iou_named(cm, subset, None)
}

pub fn mean_iou_named(cm: &ConfusionMatrix, subset: Option<&[u32]>, names: Option<&[String]>) -> Result<IouReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let c = cm.num_classes;
    let classes: Vec<u32> = match subset {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&k| k >= c) {
                return Err(Error::InvalidParameter(format!("class {bad} outside 0..{c}")));
            }
            s.to_vec()
        }
        None => (0..c).collect(),
    };
    let per_class: Vec<ClassIou> = classes
        .iter()
        .map(|&k| {
            let tp = cm.get(k, k);
            let fn_: u64 = (0..c).map(|p| cm.get(k, p)).sum::<u64>() - tp;
            let fp: u64 = (0..c).map(|g| cm.get(g, k)).sum::<u64>() - tp;
            let union = tp + fp + fn_;
            let iou = (union > 0).then(|| tp as f64 / union as f64);
            ClassIou { class: k, name: class_name(names, k), iou }
        })
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
    if present.is_empty() {
        return Err(Error::EmptyConfusion);
    }
    Ok(IouReport {
        mean_iou: present.iter().sum::<f64>() / present.len() as f64,
        classes_in_mean: present.len(),
        per_class,
    })
}

/// Output of [`evaluate_dirs`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub images: usize,
    pub all: IouReport,
    pub frequent: Option<IouReport>,
}

/// Pairs every PNG under `gt_dir` with the same relative path under
/// `pred_dir` and accumulates one confusion matrix.
pub fn evaluate_dirs(gt_dir: &Path, pred_dir: &Path, def: &ClassDefinition) -> Result<Evaluation> {
    def.validate()?;
    let files = list_pngs(gt_dir)?;
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!("no PNG files under {}", gt_dir.display())));
    }
    let mats = files
        .par_iter()
        .map(|rel| {
            let pred_path = pred_dir.join(rel);
            if !pred_path.is_file() {
                return Err(Error::MissingLabel { image: rel.clone(), path: pred_path });
            }
            let gt = read_labels(gt_dir.join(rel), None)?;
            let pred = read_labels(&pred_path, None)?;
            let mut cm = ConfusionMatrix::new(def.num_classes(), def.void_id);
            cm.accumulate(&gt, &pred)?;
            Ok(cm)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new(def.num_classes(), def.void_id);
    for m in &mats {
        cm.merge(m)?;
    }
    let all = mean_iou_named(&cm, None, Some(&def.names))?;
    let frequent = match &def.frequent {
        Some(f) => Some(mean_iou_named(&cm, Some(f), Some(&def.names))?),
        None => None,
    };
    Ok(Evaluation { images: files.len(), all, frequent })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Aligned text table, IoU in percent with one decimal.
pub fn format_table(e: &Evaluation) -> String {
    let width = e.all.per_class.iter().map(|c| c.name.len()).max().unwrap_or(5).max("mean (frequent)".len());
    let mut out = format!("{:<width$}  {:>6}\n", "class", "IoU %");
    for c in &e.all.per_class {
        out += &format!("{:<width$}  {:>6}\n", c.name, pct(c.iou));
    }
    out += &format!("{:<width$}  {:>6}\n", "mean", pct(Some(e.all.mean_iou)));
    if let Some(f) = &e.frequent {
        out += &format!("{:<width$}  {:>6}\n", "mean (frequent)", pct(Some(f.mean_iou)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    const ROAD: u32 = 0;
    const SKY: u32 = 10;
    const CAR: u32 = 13;

    fn map(w: usize, h: usize, v: &[u32]) -> SemanticLabeling {
        SemanticLabeling::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_built_two_by_two() {
        let gt = map(2, 2, &[ROAD, ROAD, SKY, 255]);
        let pred = map(2, 2, &[ROAD, SKY, SKY, CAR]);
        let mut cm = ConfusionMatrix::new(19, 255);
        cm.accumulate(&gt, &pred).unwrap();
        assert_eq!(cm.get(ROAD, ROAD), 1);
        assert_eq!(cm.get(ROAD, SKY), 1);
        assert_eq!(cm.get(SKY, SKY), 1);
        assert_eq!(cm.total(), 3);
        let r = mean_iou(&cm, None).unwrap();
        // road 1/2, sky 1/2, car absent from the counted pixels
        assert_eq!(r.classes_in_mean, 2);
        assert!((r.mean_iou - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_disjoint() {
        let gt = map(4, 4, &[0, 1, 2, 255, 0, 1, 2, 0, 1, 1, 2, 2, 0, 0, 1, 255]);
        let pred = map(4, 4, &gt.labels().iter().map(|&l| if l == 255 { 0 } else { l }).collect::<Vec<_>>());
        let mut cm = ConfusionMatrix::new(3, 255);
        cm.accumulate(&gt, &pred).unwrap();
        assert_eq!((0..3).map(|c| cm.get(c, c)).sum::<u64>(), 14);
        assert_eq!(mean_iou(&cm, None).unwrap().mean_iou, 1.0);

        let gt = map(2, 2, &[0, 1, 2, 3]);
        let pred = map(2, 2, &[1, 0, 3, 2]);
        let mut cm = ConfusionMatrix::new(4, 255);
        cm.accumulate(&gt, &pred).unwrap();
        assert_eq!(mean_iou(&cm, None).unwrap().mean_iou, 0.0);
    }

    #[test]
    fn all_void_leaves_matrix_empty() {
        let mut cm = ConfusionMatrix::new(3, 255);
        cm.accumulate(&map(2, 2, &[255; 4]), &map(2, 2, &[1; 4])).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(3, 255));
        assert!(matches!(mean_iou(&cm, None), Err(Error::EmptyConfusion)));
    }

    #[test]
    fn input_errors() {
        let mut cm = ConfusionMatrix::new(3, 255);
        assert!(matches!(cm.accumulate(&map(2, 1, &[0, 1]), &map(1, 2, &[0, 1])), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(cm.accumulate(&map(2, 1, &[0, 1]), &map(2, 1, &[0, 255])), Err(Error::VoidInPrediction(1))));
        assert!(matches!(cm.accumulate(&map(2, 1, &[0, 8]), &map(2, 1, &[0, 1])), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(cm.accumulate(&map(2, 1, &[0, 1]), &map(2, 1, &[0, 3])), Err(Error::LabelOutOfRange { .. })));
        assert_eq!(cm.total(), 0);
    }

    /// IoU per class from pixel index sets.
    fn set_oracle(gt: &[u32], pred: &[u32], classes: u32, void: u32) -> Option<f64> {
        let mut ious = Vec::new();
        for c in 0..classes {
            let g: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == c).collect();
            let p: BTreeSet<usize> = (0..gt.len()).filter(|&i| pred[i] == c && gt[i] != void).collect();
            let union = g.union(&p).count();
            if union > 0 {
                ious.push(g.intersection(&p).count() as f64 / union as f64);
            }
        }
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
    }

    #[test]
    fn matches_set_oracle_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let gt: Vec<u32> = (0..64).map(|_| if rng.gen_bool(0.1) { 255 } else { rng.gen_range(0..3) }).collect();
            let pred: Vec<u32> = (0..64).map(|_| rng.gen_range(0..3)).collect();
            let mut cm = ConfusionMatrix::new(3, 255);
            cm.accumulate(&map(8, 8, &gt), &map(8, 8, &pred)).unwrap();
            let oracle = set_oracle(&gt, &pred, 3, 255).unwrap();
            assert!((mean_iou(&cm, None).unwrap().mean_iou - oracle).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn void_pixels_are_inert(
            gt in prop::collection::vec(0u32..3, 16),
            pred in prop::collection::vec(0u32..3, 16),
            extra in prop::collection::vec(0u32..3, 8),
        ) {
            let mut a = ConfusionMatrix::new(3, 255);
            a.accumulate(&map(4, 4, &gt), &map(4, 4, &pred)).unwrap();
            let mut gt2 = gt.clone();
            gt2.extend(std::iter::repeat(255).take(8));
            let mut pred2 = pred.clone();
            pred2.extend(extra);
            let mut b = ConfusionMatrix::new(3, 255);
            b.accumulate(&map(4, 6, &gt2), &map(4, 6, &pred2)).unwrap();
            prop_assert_eq!(&a, &b);
        }

        #[test]
        fn order_free_and_bounded(pairs in prop::collection::vec((0u32..4, 0u32..4), 1..40), k in 0usize..40) {
            let (gt, pred): (Vec<u32>, Vec<u32>) = pairs.iter().cloned().unzip();
            let mut a = ConfusionMatrix::new(4, 255);
            a.accumulate(&map(gt.len(), 1, &gt), &map(pred.len(), 1, &pred)).unwrap();
            let mut rot = pairs.clone();
            rot.rotate_left(k % pairs.len());
            let (g2, p2): (Vec<u32>, Vec<u32>) = rot.into_iter().unzip();
            let mut b = ConfusionMatrix::new(4, 255);
            b.accumulate(&map(g2.len(), 1, &g2), &map(p2.len(), 1, &p2)).unwrap();
            prop_assert_eq!(&a, &b);
            let all = mean_iou(&a, None).unwrap();
            prop_assert!((0.0..=1.0).contains(&all.mean_iou));
            if let Ok(sub) = mean_iou(&a, Some(&[0, 2])) {
                for c in &sub.per_class {
                    prop_assert_eq!(c.iou, all.per_class[c.class as usize].iou);
                }
            }
        }
    }

    #[test]
    fn directory_evaluation_and_table() {
        let dir = tempfile::tempdir().unwrap();
        let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
        let l = map(3, 2, &[0, 1, 2, 10, 13, 255]);
        let p = map(3, 2, &[0, 1, 2, 10, 13, 0]);
        crate::imaging::io::write_labels(gt.join("a/x.png"), &l).unwrap();
        crate::imaging::io::write_labels(pred.join("a/x.png"), &p).unwrap();
        let e = evaluate_dirs(&gt, &pred, &ClassDefinition::default()).unwrap();
        assert_eq!(e.all.mean_iou, 1.0);
        assert_eq!(e.frequent.as_ref().unwrap().mean_iou, 1.0);
        let table = format_table(&e);
        assert!(table.contains("mean") && table.contains("100.0"));
        assert!(table.lines().any(|l| l.starts_with("terrain") && l.ends_with('-')));

        std::fs::remove_file(pred.join("a/x.png")).unwrap();
        assert!(matches!(evaluate_dirs(&gt, &pred, &ClassDefinition::default()), Err(Error::MissingLabel { .. })));
    }
}
