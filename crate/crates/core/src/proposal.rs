//! Point-prompt grids for an external proposal model, and quality filtering
//! of the proposals it returns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SegmentSet;

pub const DEFAULT_POINTS_PER_SIDE: usize = 40;

/// Cell-center prompts of an `n x n` partition of the image, as
/// `(row, col)` pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptGrid {
    pub height: usize,
    pub width: usize,
    pub n_per_side: usize,
    pub points: Vec<(usize, usize)>,
}

/// Cell center `floor((i + 0.5) * len / n)`, computed in integers.
fn cell_center(i: usize, len: usize, n: usize) -> usize {
    (2 * i + 1) * len / (2 * n)
}

pub fn gen_prompt_grid(height: usize, width: usize, n_per_side: usize) -> Result<PromptGrid> {
    if height == 0 || width == 0 || n_per_side == 0 {
        return Err(Error::BadDimensions(format!(
            "height, width and points per side must be positive (got {height}, {width}, {n_per_side})"
        )));
    }
    if n_per_side > height.min(width) {
        return Err(Error::BadDimensions(format!(
            "{n_per_side} points per side would repeat coordinates on a {height}x{width} image"
        )));
    }
    let points = (0..n_per_side)
        .flat_map(|i| {
            (0..n_per_side).map(move |j| {
                (
                    cell_center(i, height, n_per_side),
                    cell_center(j, width, n_per_side),
                )
            })
        })
        .collect();
    Ok(PromptGrid {
        height,
        width,
        n_per_side,
        points,
    })
}

/// Minimum quality a proposal needs to be kept. All comparisons are
/// inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub confidence_min: f64,
    pub stability_min: f64,
    pub min_area: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            confidence_min: 0.90,
            stability_min: 0.85,
            min_area: 5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("confidence_min", self.confidence_min),
            ("stability_min", self.stability_min),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name}={v} outside [0, 1]")));
            }
        }
        if self.min_area == 0 {
            return Err(Error::InvalidConfig("min_area must be at least 1".into()));
        }
        Ok(())
    }
}

/// Keeps proposals meeting every threshold, preserving order and ids.
pub fn filter_proposals(raw: &SegmentSet, cfg: &FilterConfig) -> SegmentSet {
    let kept = raw
        .segments()
        .iter()
        .filter(|s| {
            s.confidence() >= cfg.confidence_min
                && s.stability() >= cfg.stability_min
                && s.area() >= cfg.min_area
        })
        .cloned()
        .collect();
    SegmentSet::new(raw.height(), raw.width(), kept).expect("subset of a valid set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Segment;

    #[test]
    fn small_grid_points() {
        let g = gen_prompt_grid(4, 4, 2).unwrap();
        assert_eq!(g.points, vec![(1, 1), (1, 3), (3, 1), (3, 3)]);
    }

    #[test]
    fn single_point_is_centered() {
        assert_eq!(gen_prompt_grid(7, 10, 1).unwrap().points, vec![(3, 5)]);
    }

    #[test]
    fn default_grid_on_working_size() {
        let g = gen_prompt_grid(512, 512, DEFAULT_POINTS_PER_SIDE).unwrap();
        assert_eq!(g.points.len(), 1600);
        let coords = g.points.iter().flat_map(|&(r, c)| [r, c]);
        assert_eq!(coords.clone().min(), Some(6));
        assert_eq!(coords.max(), Some(505));
    }

    #[test]
    fn grid_rejects_bad_dimensions() {
        assert!(matches!(gen_prompt_grid(0, 4, 2), Err(Error::BadDimensions(_))));
        assert!(matches!(gen_prompt_grid(4, 4, 0), Err(Error::BadDimensions(_))));
        assert!(matches!(gen_prompt_grid(3, 40, 4), Err(Error::BadDimensions(_))));
    }

    fn seg(id: u32, conf: f64, stab: f64, area: u32) -> Segment {
        Segment::from_pixels(id, 10, 10, (0..area).collect(), conf, stab).unwrap()
    }

    fn kept(segs: Vec<Segment>) -> Vec<u32> {
        let set = SegmentSet::new(10, 10, segs).unwrap();
        filter_proposals(&set, &FilterConfig::default())
            .segments()
            .iter()
            .map(Segment::id)
            .collect()
    }

    #[test]
    fn thresholds_are_inclusive() {
        assert_eq!(kept(vec![seg(0, 0.89, 0.9, 100)]), Vec::<u32>::new());
        assert_eq!(kept(vec![seg(0, 0.90, 0.9, 100)]), vec![0]);
        assert_eq!(kept(vec![seg(0, 0.95, 0.84, 100)]), Vec::<u32>::new());
        assert_eq!(kept(vec![seg(0, 0.95, 0.85, 100)]), vec![0]);
        assert_eq!(kept(vec![seg(0, 0.95, 0.9, 4)]), Vec::<u32>::new());
        assert_eq!(kept(vec![seg(0, 0.95, 0.9, 5)]), vec![0]);
    }

    #[test]
    fn order_and_ids_survive() {
        let segs = vec![
            seg(9, 0.95, 0.9, 100),
            seg(3, 0.5, 0.9, 100),
            seg(4, 0.99, 0.99, 20),
        ];
        assert_eq!(kept(segs), vec![9, 4]);
    }

    #[test]
    fn filter_config_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        let bad = FilterConfig {
            min_area: 0,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
