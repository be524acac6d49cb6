//! File formats crossing the process boundary.
//!
//! * probability maps: raw little-endian binary (`SOSS` magic, version 1,
//!   `u32` height, `u32` width, `u16` classes, then class-major `f32`s)
//! * label masks: 8-bit grayscale PNG, pixel value = class id
//! * segment sets: JSON with uncompressed column-major RLE masks
//! * scenes: a directory of PNGs plus a JSON instance list
//!
//! Every writer goes through [`write_atomic`], so a reader never sees a
//! partially written file.

use std::io::Write;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::augment::Instance;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::proposal::PromptGrid;
use crate::synth::Scene;
use crate::types::{
    validate_probmap, BinaryMask, ClassId, ClassPlanes, Image, LabelMask, ProbMap, RawConfidences,
    Segment, SegmentSet,
};

pub const PROBMAP_MAGIC: [u8; 4] = *b"SOSS";
pub const PROBMAP_VERSION: u8 = 1;
pub const PROBMAP_HEADER_LEN: usize = 15;

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    // temporary files are private by default; outputs should not be
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- RLE

/// Uncompressed run-length encoding of a binary mask, scanning columns top
/// to bottom, left to right. Runs alternate starting with a (possibly empty)
/// run of zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Merges runs separated by zero-length runs and drops trailing empty
    /// runs, keeping only a leading zero run. The result is what
    /// [`rle_encode`] would produce for the decoded mask.
    pub fn canonicalize(&self) -> RleMask {
        let mut counts: Vec<u32> = vec![0];
        for (i, &n) in self.counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            // runs at odd positions are ones; counts[k] covers value k % 2
            let ones = i % 2 == 1;
            if (counts.len() - 1) % 2 == usize::from(ones) {
                *counts.last_mut().unwrap() += n;
            } else {
                counts.push(n);
            }
        }
        RleMask {
            height: self.height,
            width: self.width,
            counts,
        }
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (h, w) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for c in 0..w {
        for r in 0..h {
            let v = mask.get(r, c);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask {
        height: h,
        width: w,
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    let (h, w) = (rle.height, rle.width);
    let sum: u64 = rle.counts.iter().map(|&n| n as u64).sum();
    let expected = (h * w) as u64;
    if sum != expected {
        return Err(Error::CountSumMismatch { sum, expected });
    }
    let mut mask = BinaryMask::new(h, w);
    let mut k = 0usize;
    for (i, &n) in rle.counts.iter().enumerate() {
        let ones = i % 2 == 1;
        for _ in 0..n {
            if ones {
                mask.set(k % h, k / h, true);
            }
            k += 1;
        }
    }
    Ok(mask)
}

// ---------------------------------------------------------------- probability maps

pub fn encode_probmap(map: &ProbMap) -> Result<Vec<u8>> {
    let (h, w, n) = (map.height(), map.width(), map.n_classes());
    let (h32, w32, n16) = (
        u32::try_from(h).map_err(|_| Error::BadShape(format!("height {h} exceeds u32")))?,
        u32::try_from(w).map_err(|_| Error::BadShape(format!("width {w} exceeds u32")))?,
        u16::try_from(n).map_err(|_| Error::BadShape(format!("{n} classes exceed u16")))?,
    );
    let mut out = Vec::with_capacity(PROBMAP_HEADER_LEN + 4 * map.values().len());
    out.extend_from_slice(&PROBMAP_MAGIC);
    out.push(PROBMAP_VERSION);
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    out.extend_from_slice(&n16.to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_probmap(bytes: &[u8]) -> Result<ProbMap> {
    if bytes.len() < PROBMAP_HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != PROBMAP_MAGIC {
            return Err(Error::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(Error::TruncatedPayload {
            expected: PROBMAP_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != PROBMAP_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes[4] != PROBMAP_VERSION {
        return Err(Error::BadVersion(bytes[4]));
    }
    let h = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let n = u16::from_le_bytes(bytes[13..15].try_into().unwrap()) as usize;
    let count = h
        .checked_mul(w)
        .and_then(|hw| hw.checked_mul(n))
        .ok_or_else(|| Error::BadShape("header dimensions overflow".into()))?;
    let expected = PROBMAP_HEADER_LEN + 4 * count;
    let found = bytes.len();
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingData(found - expected));
    }
    let values: Vec<f32> = bytes[PROBMAP_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::ValueOutOfRange { index, value });
    }
    validate_probmap(RawConfidences::new(h, w, n, values)?)
}

pub fn write_probmap(path: &Path, map: &ProbMap) -> Result<()> {
    write_atomic(path, &encode_probmap(map)?)
}

pub fn read_probmap(path: &Path) -> Result<ProbMap> {
    decode_probmap(&read_bytes(path)?)
}

// ---------------------------------------------------------------- PNG

fn png_bytes(data: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(data, width as u32, height as u32, color)
        .map_err(|e| Error::BadImage(e.to_string()))?;
    Ok(out)
}

pub fn encode_labelmask_png(mask: &LabelMask) -> Result<Vec<u8>> {
    if let Some(max) = mask.max_label() {
        if max > u8::MAX as ClassId {
            return Err(Error::TooManyClasses {
                n_classes: max as usize + 1,
            });
        }
    }
    let data: Vec<u8> = mask.labels().iter().map(|&l| l as u8).collect();
    png_bytes(&data, mask.width(), mask.height(), ExtendedColorType::L8)
}

pub fn decode_labelmask_png(bytes: &[u8]) -> Result<LabelMask> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::BadImage(e.to_string()))?;
    let image::DynamicImage::ImageLuma8(gray) = img else {
        return Err(Error::BadImage(format!(
            "label masks must be 8-bit grayscale, found {:?}",
            img.color()
        )));
    };
    let (w, h) = gray.dimensions();
    LabelMask::new(
        h as usize,
        w as usize,
        gray.into_raw().into_iter().map(ClassId::from).collect(),
    )
}

pub fn write_labelmask(path: &Path, mask: &LabelMask) -> Result<()> {
    write_atomic(path, &encode_labelmask_png(mask)?)
}

pub fn read_labelmask(path: &Path) -> Result<LabelMask> {
    decode_labelmask_png(&read_bytes(path)?)
}

/// Display rendering of a label mask: classes spread evenly over 0..=255
/// (binary masks become black/white). Not readable back as labels.
pub fn encode_labelmask_visual(mask: &LabelMask, n_classes: usize) -> Result<Vec<u8>> {
    let top = n_classes.saturating_sub(1).max(1) as u32;
    let data: Vec<u8> = mask
        .labels()
        .iter()
        .map(|&l| (l.min(top) * 255 / top) as u8)
        .collect();
    png_bytes(&data, mask.width(), mask.height(), ExtendedColorType::L8)
}

pub fn encode_image_png(img: &Image) -> Result<Vec<u8>> {
    png_bytes(img.data(), img.width(), img.height(), ExtendedColorType::Rgb8)
}

pub fn decode_image_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::BadImage(e.to_string()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Image::from_raw(h as usize, w as usize, img.into_raw())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_image_png(img)?)
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image_png(&read_bytes(path)?)
}

// ---------------------------------------------------------------- segment sets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleCounts {
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: u32,
    pub confidence: f64,
    pub stability: f64,
    pub rle: RleCounts,
}

/// On-disk layout of a segment set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSetFile {
    pub height: usize,
    pub width: usize,
    pub segments: Vec<SegmentRecord>,
}

impl SegmentSetFile {
    pub fn from_set(set: &SegmentSet) -> Self {
        Self {
            height: set.height(),
            width: set.width(),
            segments: set
                .segments()
                .iter()
                .map(|s| SegmentRecord {
                    id: s.id(),
                    confidence: s.confidence(),
                    stability: s.stability(),
                    rle: RleCounts {
                        counts: rle_encode(&s.to_mask()).counts,
                    },
                })
                .collect(),
        }
    }

    pub fn into_set(self) -> Result<SegmentSet> {
        let (h, w) = (self.height, self.width);
        if h == 0 || w == 0 {
            return Err(Error::BadShape(format!("segment set is {h}x{w}")));
        }
        let segments = self
            .segments
            .into_iter()
            .map(|rec| {
                let mask = rle_decode(&RleMask {
                    height: h,
                    width: w,
                    counts: rec.rle.counts,
                })?;
                Segment::from_mask(rec.id, &mask, rec.confidence, rec.stability)
            })
            .collect::<Result<Vec<_>>>()?;
        SegmentSet::new(h, w, segments)
    }
}

pub fn segments_to_json(set: &SegmentSet) -> String {
    serde_json::to_string(&SegmentSetFile::from_set(set)).expect("plain data serializes")
}

pub fn segments_from_json(text: &str) -> std::result::Result<SegmentSet, SegmentsJsonError> {
    let file: SegmentSetFile = serde_json::from_str(text).map_err(SegmentsJsonError::Json)?;
    file.into_set().map_err(SegmentsJsonError::Invalid)
}

#[derive(Debug)]
pub enum SegmentsJsonError {
    Json(serde_json::Error),
    Invalid(Error),
}

pub fn write_segments(path: &Path, set: &SegmentSet) -> Result<()> {
    write_atomic(path, segments_to_json(set).as_bytes())
}

pub fn read_segments(path: &Path) -> Result<SegmentSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    segments_from_json(&text).map_err(|e| match e {
        SegmentsJsonError::Json(e) => Error::json(path, e),
        SegmentsJsonError::Invalid(e) => e,
    })
}

pub fn write_prompt_grid(path: &Path, grid: &PromptGrid) -> Result<()> {
    let text = serde_json::to_string(grid).expect("plain data serializes");
    write_atomic(path, text.as_bytes())
}

// ---------------------------------------------------------------- scenes

pub const IMAGE_FILE: &str = "image.png";
pub const GT_FILE: &str = "gt.png";
pub const SCENE_FILE: &str = "scene.json";
pub const SEM_FILE: &str = "sem.bin";
pub const SEGMENTS_FILE: &str = "segments.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InstanceRecord {
    class: ClassId,
    kind: u32,
    polygon: Vec<Point>,
    rle: RleCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneRecord {
    seed: u64,
    height: usize,
    width: usize,
    instances: Vec<InstanceRecord>,
}

/// Writes `image.png`, `gt.png` and `scene.json` into `dir` (created if
/// missing).
pub fn write_scene_dir(dir: &Path, scene: &Scene) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_image(&dir.join(IMAGE_FILE), &scene.image)?;
    write_labelmask(&dir.join(GT_FILE), &scene.gt)?;
    let (h, w) = scene.image.dims();
    let record = SceneRecord {
        seed: scene.seed,
        height: h,
        width: w,
        instances: scene
            .instances
            .iter()
            .map(|inst| InstanceRecord {
                class: inst.class,
                kind: inst.kind,
                polygon: inst.polygon.clone(),
                rle: RleCounts {
                    counts: rle_encode(&inst.mask).counts,
                },
            })
            .collect(),
    };
    let text = serde_json::to_string(&record).expect("plain data serializes");
    write_atomic(&dir.join(SCENE_FILE), text.as_bytes())
}

pub fn read_scene_dir(dir: &Path) -> Result<Scene> {
    let image = read_image(&dir.join(IMAGE_FILE))?;
    let gt = read_labelmask(&dir.join(GT_FILE))?;
    let path = dir.join(SCENE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let record: SceneRecord = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let dims = (record.height, record.width);
    if image.dims() != dims || gt.dims() != dims {
        return Err(Error::MalformedScene(format!(
            "{}: image {:?}, labels {:?} and scene.json {:?} disagree",
            dir.display(),
            image.dims(),
            gt.dims(),
            dims
        )));
    }
    let instances = record
        .instances
        .into_iter()
        .map(|rec| {
            let mask = rle_decode(&RleMask {
                height: dims.0,
                width: dims.1,
                counts: rec.rle.counts,
            })?;
            if rec.class == 0 {
                return Err(Error::MalformedScene(format!(
                    "{}: instance with background class 0",
                    path.display()
                )));
            }
            Ok(Instance {
                class: rec.class,
                kind: rec.kind,
                polygon: rec.polygon,
                mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene {
        image,
        gt,
        instances,
        seed: record.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::onehot_from_labels;

    #[test]
    fn rle_of_column_vector() {
        let m = BinaryMask::from_vec(5, 1, vec![false, false, true, true, false]).unwrap();
        assert_eq!(rle_encode(&m).counts, vec![2, 2, 1]);
    }

    #[test]
    fn rle_of_full_mask_starts_with_empty_run() {
        let m = BinaryMask::from_vec(2, 2, vec![true; 4]).unwrap();
        let rle = rle_encode(&m);
        assert_eq!(rle.counts, vec![0, 4]);
        assert_eq!(rle_decode(&rle).unwrap(), m);
    }

    #[test]
    fn rle_scans_columns_first() {
        // row-major [[1,0],[0,0]] -> column-major [1,0,0,0]
        let m = BinaryMask::from_vec(2, 2, vec![true, false, false, false]).unwrap();
        assert_eq!(rle_encode(&m).counts, vec![0, 1, 3]);
        // row-major [[0,1],[0,0]] -> column-major [0,0,1,0]
        let m = BinaryMask::from_vec(2, 2, vec![false, true, false, false]).unwrap();
        assert_eq!(rle_encode(&m).counts, vec![2, 1, 1]);
    }

    #[test]
    fn rle_decode_checks_count_sum() {
        let rle = RleMask {
            height: 2,
            width: 2,
            counts: vec![1, 2],
        };
        assert!(matches!(
            rle_decode(&rle),
            Err(Error::CountSumMismatch { sum: 3, expected: 4 })
        ));
    }

    #[test]
    fn canonicalize_merges_interior_zero_runs() {
        let rle = RleMask {
            height: 1,
            width: 6,
            counts: vec![0, 2, 0, 1, 3, 0],
        };
        assert_eq!(rle.canonicalize().counts, vec![0, 3, 3]);
        let rle = RleMask {
            height: 1,
            width: 5,
            counts: vec![2, 0, 3],
        };
        assert_eq!(rle.canonicalize().counts, vec![5]);
    }

    fn map(values: Vec<f32>) -> ProbMap {
        ProbMap::from_planes(1, 1, 2, values).unwrap()
    }

    #[test]
    fn tiny_probmap_file_layout() {
        let bytes = encode_probmap(&map(vec![0.25, 0.75])).unwrap();
        assert_eq!(bytes.len(), 23);
        assert_eq!(&bytes[..5], b"SOSS\x01");
        assert_eq!(&bytes[5..15], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0]);
        assert_eq!(&bytes[15..19], &0.25f32.to_le_bytes());
        let back = decode_probmap(&bytes).unwrap();
        assert_eq!(back.values(), &[0.25, 0.75]);
    }

    #[test]
    fn probmap_decode_errors() {
        let good = encode_probmap(&map(vec![0.25, 0.75])).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_probmap(&bad), Err(Error::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_probmap(&bad), Err(Error::BadVersion(2))));
        assert!(matches!(
            decode_probmap(&good[..20]),
            Err(Error::TruncatedPayload {
                expected: 23,
                found: 20
            })
        ));
        assert!(matches!(
            decode_probmap(&good[..7]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_probmap(&bad), Err(Error::TrailingData(1))));
        let mut bad = good.clone();
        bad[15..19].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(
            decode_probmap(&bad),
            Err(Error::ValueOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn labelmask_png_round_trip() {
        let mask = LabelMask::new(2, 3, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let bytes = encode_labelmask_png(&mask).unwrap();
        assert_eq!(decode_labelmask_png(&bytes).unwrap(), mask);
    }

    #[test]
    fn labelmask_png_rejects_wide_labels() {
        let mask = LabelMask::new(1, 2, vec![0, 256]).unwrap();
        assert!(matches!(
            encode_labelmask_png(&mask),
            Err(Error::TooManyClasses { n_classes: 257 })
        ));
    }

    #[test]
    fn labelmask_decode_rejects_color_and_garbage() {
        let rgb = encode_image_png(&Image::new(2, 2)).unwrap();
        assert!(matches!(decode_labelmask_png(&rgb), Err(Error::BadImage(_))));
        assert!(matches!(decode_labelmask_png(b"nope"), Err(Error::BadImage(_))));
    }

    #[test]
    fn visual_export_is_separate_from_canonical_labels() {
        let mask = LabelMask::new(1, 2, vec![0, 1]).unwrap();
        let visual = encode_labelmask_visual(&mask, 2).unwrap();
        let decoded = decode_labelmask_png(&visual).unwrap();
        assert_eq!(decoded.labels(), &[0, 255]);
        let canonical = decode_labelmask_png(&encode_labelmask_png(&mask).unwrap()).unwrap();
        assert_eq!(canonical.labels(), &[0, 1]);
    }

    #[test]
    fn segment_json_round_trip() {
        let m = BinaryMask::from_fn(3, 4, |r, c| r == c);
        let set = SegmentSet::new(
            3,
            4,
            vec![
                Segment::from_mask(4, &m, 0.93, 0.88).unwrap(),
                Segment::from_mask(2, &BinaryMask::new(3, 4), 1.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let text = segments_to_json(&set);
        assert!(text.contains("\"rle\":{\"counts\":[0,1,3,1,3,1,3]}"));
        assert_eq!(segments_from_json(&text).unwrap(), set);
    }

    #[test]
    fn segment_json_rejects_bad_counts() {
        let text = r#"{"height":2,"width":2,"segments":[{"id":0,"confidence":0.9,"stability":0.9,"rle":{"counts":[1,1]}}]}"#;
        assert!(matches!(
            segments_from_json(text),
            Err(SegmentsJsonError::Invalid(Error::CountSumMismatch { .. }))
        ));
        assert!(matches!(
            segments_from_json("{\"height\":2}"),
            Err(SegmentsJsonError::Json(_))
        ));
    }

    #[test]
    fn probmap_file_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let gt = LabelMask::new(2, 2, vec![0, 1, 2, 1]).unwrap();
        let m = onehot_from_labels(&gt, 3).unwrap();
        write_probmap(&path, &m).unwrap();
        assert_eq!(read_probmap(&path).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
