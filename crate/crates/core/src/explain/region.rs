use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{explain_players, percentile_select, region_partition, FeatureReport, SummandConfig};
use crate::bounds::BoundRecord;
use crate::error::{domain, Result};
use crate::masking::{ConditionalSampler, Masker};
use crate::predictors::Predictor;
use crate::rng::derive_seed;

/// An axis-aligned block of an image, in pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn image(height: usize, width: usize) -> Self {
        Region {
            id: String::new(),
            row: 0,
            col: 0,
            height,
            width,
        }
    }

    /// Flat pixel indices in an image `image_width` pixels wide.
    pub fn pixels(&self, image_width: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in self.row..self.row + self.height {
            for c in self.col..self.col + self.width {
                out.push(r * image_width + c);
            }
        }
        out
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Overlap in pixels with another region.
    pub fn overlap(&self, other: &Region) -> usize {
        let rows = (self.row + self.height)
            .min(other.row + other.height)
            .saturating_sub(self.row.max(other.row));
        let cols = (self.col + self.width)
            .min(other.col + other.width)
            .saturating_sub(self.col.max(other.col));
        rows * cols
    }

    /// Top-left, top-right, bottom-left, bottom-right halves, or `None`
    /// when a side is not divisible by two or would fall below `min_side`.
    pub fn quadrants(&self, min_side: usize) -> Option<[Region; 4]> {
        if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return None;
        }
        let (h, w) = (self.height / 2, self.width / 2);
        if h < min_side.max(1) || w < min_side.max(1) {
            return None;
        }
        let child = |k: usize, row, col| Region {
            id: if self.id.is_empty() {
                k.to_string()
            } else {
                format!("{}.{k}", self.id)
            },
            row,
            col,
            height: h,
            width: w,
        };
        Some([
            child(0, self.row, self.col),
            child(1, self.row, self.col + w),
            child(2, self.row + h, self.col),
            child(3, self.row + h, self.col + w),
        ])
    }
}

/// Which sibling regions are recursed into.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Global p-value strictly below the q-th percentile of the siblings'.
    Percentile { q: f64 },
    /// Global p-value at most `alpha`.
    Alpha,
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::Percentile { q: 70.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Levels of quadrant splits, at least 1.
    pub depth: usize,
    pub rule: SelectionRule,
    /// Smallest region side to split down to.
    pub min_side: usize,
    pub summands: SummandConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: Region,
    pub depth: usize,
    pub phi: f64,
    pub records: Vec<BoundRecord>,
    pub p_global: f64,
    /// Global null rejected at the configured alpha.
    pub rejected: bool,
    /// Chosen by the selection rule among its siblings.
    pub selected: bool,
    pub children: Vec<RegionReport>,
    /// Why recursion stopped early, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped: Option<String>,
}

impl RegionReport {
    fn from_feature(region: Region, depth: usize, report: FeatureReport, selected: bool) -> Self {
        RegionReport {
            region,
            depth,
            phi: report.phi,
            p_global: report.global.p_global,
            rejected: report.global.reject,
            records: report.records,
            selected,
            children: Vec::new(),
            stopped: None,
        }
    }

    /// Reports in depth-first order.
    pub fn flatten(&self) -> Vec<&RegionReport> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.flatten());
        }
        out
    }
}

fn select(reports: &[FeatureReport], rule: SelectionRule, alpha: f64) -> Vec<bool> {
    let p: Vec<f64> = reports.iter().map(|r| r.global.p_global).collect();
    match rule {
        SelectionRule::Percentile { q } => percentile_select(&p, q, alpha),
        SelectionRule::Alpha => p.iter().map(|&v| v <= alpha).collect(),
    }
}

/// Explains the four quadrants of `parent`, the rest of the image masked,
/// then recurses into the selected ones.
fn explain_level(
    predictor: &dyn Predictor,
    x: &[f64],
    sampler: &Arc<dyn ConditionalSampler>,
    image_width: usize,
    parent: &Region,
    level: usize,
    cfg: &HierarchyConfig,
) -> Result<Vec<RegionReport>> {
    let children = parent
        .quadrants(cfg.min_side)
        .ok_or_else(|| domain(format!("region `{}` cannot be split", parent.id)))?;
    let partition = region_partition(x.len(), image_width, &children)?;
    let masker = Masker::new(sampler.clone(), partition)?;
    let summands = SummandConfig {
        seed: derive_seed(
            cfg.summands.seed,
            &[level as u64, parent.row as u64, parent.col as u64],
        ),
        ..cfg.summands
    };
    let reports = explain_players(predictor, x, &masker, &[0, 1, 2, 3], &summands)?;
    let chosen = select(&reports, cfg.rule, cfg.summands.alpha);
    let mut out: Vec<RegionReport> = children
        .into_iter()
        .zip(reports)
        .zip(&chosen)
        .map(|((region, rep), &sel)| RegionReport::from_feature(region, level, rep, sel))
        .collect();
    if level < cfg.depth {
        out.par_iter_mut()
            .filter(|r| r.selected)
            .try_for_each(|r| -> Result<()> {
                if r.region.quadrants(cfg.min_side).is_none() {
                    r.stopped = Some(format!(
                        "region below the minimum side {} or not divisible",
                        cfg.min_side
                    ));
                    return Ok(());
                }
                r.children = explain_level(
                    predictor,
                    x,
                    sampler,
                    image_width,
                    &r.region,
                    level + 1,
                    cfg,
                )?;
                Ok(())
            })?;
    }
    Ok(out)
}

/// Quadrant explanation of an image `height x width` (row-major in `x`),
/// recursing into selected quadrants up to `cfg.depth` levels.
///
/// At each level the players are the four quadrants of the current region
/// and every pixel outside it stays masked.
pub fn hierarchical_explain(
    predictor: &dyn Predictor,
    x: &[f64],
    height: usize,
    width: usize,
    sampler: Arc<dyn ConditionalSampler>,
    cfg: &HierarchyConfig,
) -> Result<Vec<RegionReport>> {
    if cfg.depth == 0 {
        return Err(domain("depth must be at least 1"));
    }
    if height * width != x.len() {
        return Err(domain(format!(
            "a {height} x {width} image has {} pixels, got {}",
            height * width,
            x.len()
        )));
    }
    explain_level(
        predictor,
        x,
        &sampler,
        width,
        &Region::image(height, width),
        1,
        cfg,
    )
}
