use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MsmError;

const MIN_CLUSTER_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub label: usize,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// Clusters in increasing order of RC mean.
    pub clusters: Vec<ClusterStats>,
    /// Cut points between adjacent clusters (midpoints of their means).
    pub thresholds: Vec<f64>,
    /// Differences of adjacent cluster means.
    pub gaps: Vec<f64>,
    /// `gap / pooled within-cluster std` for each adjacent pair.
    pub gap_ratios: Vec<f64>,
    pub min_gap_ratio: f64,
    pub accuracy: f64,
    /// Pair of original labels merged before scoring, if any.
    pub merged: Option<(usize, usize)>,
    pub warnings: Vec<String>,
}

/// Score how well thresholds on a 1-D RC reproduce cluster labels.
pub fn rc_cluster_separation(rc: &[f64], labels: &[usize]) -> Result<SeparationReport, MsmError> {
    if rc.len() != labels.len() {
        return Err(MsmError::Invalid(format!(
            "{} rc values for {} labels",
            rc.len(),
            labels.len()
        )));
    }
    if rc.iter().any(|v| !v.is_finite()) {
        return Err(MsmError::Invalid("non-finite rc value".into()));
    }
    let mut acc: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for (&v, &l) in rc.iter().zip(labels) {
        let e = acc.entry(l).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += v;
    }
    if acc.len() < 2 {
        return Err(MsmError::Invalid(
            "at least two clusters are required".into(),
        ));
    }
    for (&v, &l) in rc.iter().zip(labels) {
        let e = acc.get_mut(&l).expect("seen");
        let mean = e.1 / e.0 as f64;
        e.2 += (v - mean) * (v - mean);
    }
    let mut clusters: Vec<ClusterStats> = acc
        .iter()
        .map(|(&label, &(count, sum, ss))| ClusterStats {
            label,
            count,
            mean: sum / count as f64,
            std: (ss / count as f64).sqrt(),
        })
        .collect();
    clusters.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.label.cmp(&b.label)));

    let mut warnings = Vec::new();
    for c in &clusters {
        if c.count < MIN_CLUSTER_POINTS {
            warnings.push(format!("cluster {} has only {} points", c.label, c.count));
        }
    }
    let thresholds: Vec<f64> = clusters
        .windows(2)
        .map(|w| 0.5 * (w[0].mean + w[1].mean))
        .collect();
    let gaps: Vec<f64> = clusters.windows(2).map(|w| w[1].mean - w[0].mean).collect();
    let gap_ratios: Vec<f64> = clusters
        .windows(2)
        .zip(&gaps)
        .map(|(w, g)| {
            let (a, b) = (&w[0], &w[1]);
            let pooled = ((a.count as f64 * a.std * a.std + b.count as f64 * b.std * b.std)
                / (a.count + b.count) as f64)
                .sqrt();
            if pooled > 0.0 {
                g / pooled
            } else if *g > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    let min_gap_ratio = gap_ratios.iter().copied().fold(f64::INFINITY, f64::min);

    let correct = rc
        .iter()
        .zip(labels)
        .filter(|(v, l)| {
            let slot = thresholds.partition_point(|t| t < *v);
            clusters[slot].label == **l
        })
        .count();
    Ok(SeparationReport {
        clusters,
        thresholds,
        gaps,
        gap_ratios,
        min_gap_ratio,
        accuracy: correct as f64 / rc.len() as f64,
        merged: None,
        warnings,
    })
}

/// Like [`rc_cluster_separation`], but also tries merging every pair of
/// clusters into one and keeps the best-scoring variant (highest accuracy,
/// then largest minimum gap ratio; no merge wins ties).
pub fn rc_cluster_separation_with_merge(
    rc: &[f64],
    labels: &[usize],
) -> Result<SeparationReport, MsmError> {
    let mut best = rc_cluster_separation(rc, labels)?;
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Ok(best);
    }
    for (ai, &a) in distinct.iter().enumerate() {
        for &b in &distinct[ai + 1..] {
            let merged: Vec<usize> = labels.iter().map(|&l| if l == b { a } else { l }).collect();
            let mut r = rc_cluster_separation(rc, &merged)?;
            r.merged = Some((a, b));
            let better = r.accuracy > best.accuracy
                || (r.accuracy == best.accuracy && r.min_gap_ratio > best.min_gap_ratio);
            if better {
                best = r;
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::seq::SliceRandom;

    #[test]
    fn perfectly_separated() {
        let r =
            rc_cluster_separation(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.clusters[0].std, 0.0);
        assert_eq!(r.thresholds, vec![0.5]);
        assert!(r.min_gap_ratio.is_infinite());
        assert_eq!(r.warnings.len(), 2);
    }

    #[test]
    fn shuffled_labels_are_at_chance() {
        let n = 4000;
        let rc: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { 0.0 } else { 1.0 } + (i % 7) as f64 * 0.01)
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        labels.shuffle(&mut rng::stream(1));
        let r = rc_cluster_separation(&rc, &labels).unwrap();
        assert!((r.accuracy - 0.5).abs() <= 0.05, "{}", r.accuracy);
    }

    #[test]
    fn label_permutation_and_affine_invariance() {
        let rc = [0.1, 0.2, 0.15, 1.0, 1.2, 0.9, 2.2, 2.0, 0.95];
        let labels = [0, 0, 0, 1, 1, 1, 2, 2, 0];
        let base = rc_cluster_separation(&rc, &labels).unwrap();
        let relabeled: Vec<usize> = labels.iter().map(|l| (l + 1) % 3).collect();
        assert_eq!(
            rc_cluster_separation(&rc, &relabeled).unwrap().accuracy,
            base.accuracy
        );
        let affine: Vec<f64> = rc.iter().map(|v| -3.0 * v + 7.0).collect();
        let r = rc_cluster_separation(&affine, &labels).unwrap();
        assert_eq!(r.accuracy, base.accuracy);
        assert!((r.min_gap_ratio - base.min_gap_ratio).abs() < 1e-9);
    }

    #[test]
    fn best_merge_is_flagged() {
        // Clusters 0 and 3 share an RC range, as at the wrap-around of a ring.
        let mut rc = Vec::new();
        let mut labels = Vec::new();
        for (l, c) in [(0, 0.0), (1, 1.0), (2, 2.0), (3, 0.0)] {
            for k in 0..20 {
                rc.push(c + 0.01 * k as f64);
                labels.push(l);
            }
        }
        let plain = rc_cluster_separation(&rc, &labels).unwrap();
        assert!(plain.accuracy < 0.8);
        let r = rc_cluster_separation_with_merge(&rc, &labels).unwrap();
        assert_eq!(r.merged, Some((0, 3)));
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn needs_two_clusters() {
        assert!(rc_cluster_separation(&[1.0, 2.0], &[0, 0]).is_err());
    }
}
