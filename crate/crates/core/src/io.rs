//! Dataset and detection files.
//!
//! Two interchangeable encodings are supported:
//!
//! * VisDrone text: one file per image, one object per line,
//!   `bbox_left,bbox_top,bbox_width,bbox_height,score,object_category,truncation,occlusion`.
//! * JSON: a single [`Dataset`] (ground truth) or [`DetectionFile`] (detections).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boxgeom::{BBox, ImageSize, ScoredBox};
use crate::error::{Error, Result};
use crate::evalkit::{DetectionSet, GroundTruthSet, GtBox};

const DEFAULT_CLASS_MAP: &str = include_str!("../data/visdrone_classes.json");

/// One line of a VisDrone annotation or result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisDroneRecord {
    pub bbox_left: i64,
    pub bbox_top: i64,
    pub bbox_width: i64,
    pub bbox_height: i64,
    pub score: f64,
    pub category: u32,
    pub truncation: i32,
    pub occlusion: i32,
}

impl VisDroneRecord {
    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let line = line.trim();
        let line = line.strip_suffix(',').unwrap_or(line);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(format!("expected 8 comma-separated fields, found {}", fields.len()));
        }
        fn int<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("{name}: cannot parse {s:?}"))
        }
        let rec = Self {
            bbox_left: int(fields[0], "bbox_left")?,
            bbox_top: int(fields[1], "bbox_top")?,
            bbox_width: int(fields[2], "bbox_width")?,
            bbox_height: int(fields[3], "bbox_height")?,
            score: fields[4]
                .parse()
                .map_err(|_| format!("score: cannot parse {:?}", fields[4]))?,
            category: int(fields[5], "object_category")?,
            truncation: int(fields[6], "truncation")?,
            occlusion: int(fields[7], "occlusion")?,
        };
        if rec.bbox_width < 0 || rec.bbox_height < 0 {
            return Err(format!(
                "negative box extent {}x{}",
                rec.bbox_width, rec.bbox_height
            ));
        }
        if !rec.score.is_finite() {
            return Err("score is not finite".into());
        }
        Ok(rec)
    }

    pub fn bbox(&self) -> BBox {
        let (l, t) = (self.bbox_left as f64, self.bbox_top as f64);
        BBox {
            x1: l,
            y1: t,
            x2: l + self.bbox_width as f64,
            y2: t + self.bbox_height as f64,
        }
    }

    /// Result-file line for a detection; corners are rounded to whole pixels.
    pub fn from_detection(d: &ScoredBox) -> Self {
        let x1 = d.bbox.x1.round() as i64;
        let y1 = d.bbox.y1.round() as i64;
        Self {
            bbox_left: x1,
            bbox_top: y1,
            bbox_width: d.bbox.x2.round() as i64 - x1,
            bbox_height: d.bbox.y2.round() as i64 - y1,
            score: d.score,
            category: d.class_id,
            truncation: -1,
            occlusion: -1,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.bbox_left,
            self.bbox_top,
            self.bbox_width,
            self.bbox_height,
            fmt_score(self.score),
            self.category,
            self.truncation,
            self.occlusion
        )
    }
}

fn fmt_score(s: f64) -> String {
    if s == s.trunc() {
        format!("{}", s as i64)
    } else {
        format!("{s:.4}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassRole {
    Object,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub role: ClassRole,
}

/// Category id table; JSON object keyed by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMap(pub BTreeMap<u32, ClassEntry>);

impl Default for ClassMap {
    /// VisDrone-DET categories.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CLASS_MAP).expect("bundled class map is valid")
    }
}

impl ClassMap {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn object_classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.0
            .iter()
            .filter(|(_, e)| e.role == ClassRole::Object)
            .map(|(&id, _)| id)
    }

    pub fn names(&self) -> BTreeMap<u32, String> {
        self.0.iter().map(|(&id, e)| (id, e.name.clone())).collect()
    }

    /// Synthetic categories `1..=n` named `class1..classn`.
    pub fn numbered(n: u32) -> Self {
        Self(
            (1..=n)
                .map(|i| {
                    (
                        i,
                        ClassEntry {
                            name: format!("class{i}"),
                            role: ClassRole::Object,
                        },
                    )
                })
                .collect(),
        )
    }
}

/// A ground-truth object with its VisDrone metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub class_id: u32,
    #[serde(default)]
    pub truncation: i32,
    #[serde(default)]
    pub occlusion: i32,
    #[serde(default)]
    pub ignore: bool,
}

impl Annotation {
    pub fn to_gt(&self) -> GtBox {
        GtBox {
            bbox: self.bbox,
            class_id: self.class_id,
            ignore: self.ignore,
        }
    }

    pub fn to_record(&self) -> VisDroneRecord {
        VisDroneRecord {
            bbox_left: self.bbox.x1.round() as i64,
            bbox_top: self.bbox.y1.round() as i64,
            bbox_width: self.bbox.width().round() as i64,
            bbox_height: self.bbox.height().round() as i64,
            score: if self.ignore { 0.0 } else { 1.0 },
            category: self.class_id,
            truncation: self.truncation,
            occlusion: self.occlusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<ImageSize>,
    pub annotations: Vec<Annotation>,
}

impl ImageRecord {
    /// Boxes and classes of the objects to detect (ignore regions excluded).
    pub fn objects(&self) -> Vec<(BBox, u32)> {
        self.annotations
            .iter()
            .filter(|a| !a.ignore)
            .map(|a| (a.bbox, a.class_id))
            .collect()
    }
}

/// Ground-truth dataset; the JSON form is
/// `{"images": [{"image_id", "size": {"width", "height"}?, "annotations": [..]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    /// Object category ids; empty means "infer from annotations".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<u32>,
}

impl Dataset {
    pub fn ground_truth(&self) -> GroundTruthSet {
        let images = self
            .images
            .iter()
            .map(|im| (im.image_id.clone(), im.annotations.iter().map(Annotation::to_gt).collect()))
            .collect();
        let mut gts = GroundTruthSet::from_images(images);
        if !self.categories.is_empty() {
            gts.categories = self.categories.iter().copied().collect();
        }
        gts
    }

    pub fn sort(&mut self) {
        self.images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path_str(path),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path_str(path),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value).as_bytes())
}

/// Parses one VisDrone file into `(line number, record)` pairs.
pub fn parse_visdrone_text(path_label: &str, text: &str) -> Result<Vec<(usize, VisDroneRecord)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = VisDroneRecord::parse(line).map_err(|reason| Error::Parse {
            path: path_label.to_string(),
            line: i + 1,
            reason,
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// `.txt` files of a directory, sorted by name, with their stems as image ids.
fn text_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: path_str(dir),
        source,
    })?;
    let mut files = Vec::new();
    for e in entries {
        let e = e.map_err(|source| Error::Io {
            path: path_str(dir),
            source,
        })?;
        let p = e.path();
        if p.extension().is_some_and(|x| x == "txt") {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.push((stem, p));
        }
    }
    files.sort();
    Ok(files)
}

/// Annotations from VisDrone text in `text`, resolving categories with `classes`.
pub fn annotations_from_text(path_label: &str, text: &str, classes: &ClassMap) -> Result<Vec<Annotation>> {
    parse_visdrone_text(path_label, text)?
        .into_iter()
        .map(|(line, r)| {
            let role = classes.0.get(&r.category).map(|e| e.role).ok_or_else(|| Error::Parse {
                path: path_label.to_string(),
                line,
                reason: format!("unknown object_category {}", r.category),
            })?;
            Ok(Annotation {
                bbox: r.bbox(),
                class_id: r.category,
                truncation: r.truncation,
                occlusion: r.occlusion,
                ignore: role == ClassRole::Ignore,
            })
        })
        .collect()
}

/// Reads ground truth from a directory of VisDrone text files or a single
/// JSON [`Dataset`]. Text input carries no image sizes.
pub fn parse_annotations(path: &Path, classes: &ClassMap) -> Result<Dataset> {
    if path.is_dir() {
        let mut images = Vec::new();
        for (image_id, file) in text_files(path)? {
            let text = read_text(&file)?;
            let annotations = annotations_from_text(&path_str(&file), &text, classes)?;
            images.push(ImageRecord {
                image_id,
                size: None,
                annotations,
            });
        }
        Ok(Dataset {
            images,
            categories: classes.object_classes().collect(),
        })
    } else {
        let mut ds: Dataset = read_json(path)?;
        ds.sort();
        Ok(ds)
    }
}

/// Writes one VisDrone annotation file per image.
pub fn write_visdrone_annotations(dir: &Path, ds: &Dataset) -> Result<()> {
    for im in &ds.images {
        let mut text = String::new();
        for a in &im.annotations {
            text.push_str(&a.to_record().to_line());
            text.push('\n');
        }
        write_atomic(&dir.join(format!("{}.txt", im.image_id)), text.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<ScoredBox>,
}

/// Image-level detections; JSON `{"images": [{"image_id", "detections": [..]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub images: Vec<ImageDetections>,
}

impl DetectionFile {
    pub fn to_set(&self) -> DetectionSet {
        let mut set = DetectionSet::new();
        for im in &self.images {
            set.entry(im.image_id.clone())
                .or_default()
                .extend(im.detections.iter().copied());
        }
        set
    }
}

/// Reads detections from a directory of VisDrone result files or a JSON
/// [`DetectionFile`].
pub fn parse_detections(path: &Path) -> Result<DetectionSet> {
    if path.is_dir() {
        let mut set = DetectionSet::new();
        for (image_id, file) in text_files(path)? {
            let label = path_str(&file);
            let text = read_text(&file)?;
            let mut dets = Vec::new();
            for (line, r) in parse_visdrone_text(&label, &text)? {
                let d = ScoredBox::new(r.bbox(), r.category, r.score).map_err(|e| Error::Parse {
                    path: label.clone(),
                    line,
                    reason: e.to_string(),
                })?;
                dets.push(d);
            }
            set.insert(image_id, dets);
        }
        Ok(set)
    } else {
        let f: DetectionFile = read_json(path)?;
        for im in &f.images {
            for d in &im.detections {
                ScoredBox::new(d.bbox, d.class_id, d.score)?;
            }
        }
        Ok(f.to_set())
    }
}

/// Writes one VisDrone result file per image.
pub fn write_visdrone_results(dir: &Path, dets: &DetectionFile) -> Result<()> {
    for im in &dets.images {
        let mut text = String::new();
        for d in &im.detections {
            text.push_str(&VisDroneRecord::from_detection(d).to_line());
            text.push('\n');
        }
        write_atomic(&dir.join(format!("{}.txt", im.image_id)), text.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_record() {
        let r = VisDroneRecord::parse("10,20,30,40,1,4,0,0").unwrap();
        assert_eq!(r.bbox(), BBox::new(10., 20., 40., 60.).unwrap());
        assert_eq!(r.category, 4);
        assert_eq!(r.to_line(), "10,20,30,40,1,4,0,0");
        assert!(VisDroneRecord::parse("10,20,30,40,1,4,0,").is_err());
        assert!(VisDroneRecord::parse("10,20,-3,40,1,4,0,0").is_err());
        assert!(VisDroneRecord::parse("10,20,x,40,1,4,0,0").is_err());
        // trailing comma variant seen in some releases
        assert!(VisDroneRecord::parse("10,20,30,40,1,4,0,0,").is_ok());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "1,1,5,5,1,1,0,0\n\n1,2,3,4,1,1,0\n";
        match parse_visdrone_text("a.txt", text) {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "a.txt");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_visdrone_text("e.txt", "").unwrap().is_empty());
    }

    #[test]
    fn category_zero_is_ignore() {
        let classes = ClassMap::default();
        let anns = annotations_from_text("x", "0,0,50,50,0,0,0,0\n5,5,10,10,1,4,1,2\n", &classes).unwrap();
        assert!(anns[0].ignore);
        assert!(!anns[1].ignore);
        assert_eq!((anns[1].truncation, anns[1].occlusion), (1, 2));
        assert!(annotations_from_text("x", "0,0,5,5,1,99,0,0", &classes).is_err());
        assert_eq!(classes.object_classes().count(), 10);
    }

    #[test]
    fn detection_line_rounds_corners() {
        let d = ScoredBox::new(BBox::new(10.4, 20.6, 30.5, 40.2).unwrap(), 3, 0.87654).unwrap();
        assert_eq!(VisDroneRecord::from_detection(&d).to_line(), "10,21,21,19,0.8765,3,-1,-1");
    }

    #[test]
    fn atomic_write_leaves_no_partial() {
        let dir = std::env::temp_dir().join(format!("focusdet-io-{}", std::process::id()));
        let p = dir.join("sub/out.json");
        write_json(&p, &Dataset::default()).unwrap();
        let back: Dataset = read_json(&p).unwrap();
        assert_eq!(back, Dataset::default());
        assert!(!dir.join("sub/out.json.partial").exists());
        fs::remove_dir_all(dir).unwrap();
    }
}
