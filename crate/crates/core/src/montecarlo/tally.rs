//! Time-binned, order-tagged detection tallies with reproducible merging.

use crate::geometry::DetectorGeometry;

use super::Detection;

/// Detection classes tallied separately. Order-2 detections are split by the
/// full-acceptance condition of the second scattering vertex, `eps z2 > xi +
/// rho0` with `xi` the vertex's actual transverse radius: inside it the whole
/// receiver disk is visible within the aperture (the regime the closed-form
/// double-scattering integral covers); outside it lies the partial-acceptance
/// remainder that the analytic bounds cap. Testing the trajectory's own `xi`
/// rather than the height-proxy domain keeps the split exact at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderClass {
    One,
    TwoInD0,
    TwoOutD0,
    ThreePlus,
}

pub const N_CLASSES: usize = 4;

impl OrderClass {
    pub fn index(self) -> usize {
        match self {
            OrderClass::One => 0,
            OrderClass::TwoInD0 => 1,
            OrderClass::TwoOutD0 => 2,
            OrderClass::ThreePlus => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OrderClass::One => "order1",
            OrderClass::TwoInD0 => "order2_d0",
            OrderClass::TwoOutD0 => "order2_remainder",
            OrderClass::ThreePlus => "order3_plus",
        }
    }

    pub fn classify(det: &Detection, geom: &DetectorGeometry) -> OrderClass {
        match det.order {
            0 => unreachable!("order-0 detections are geometrically impossible"),
            1 => OrderClass::One,
            2 => {
                if geom.epsilon() * det.z_second > det.xi_second + geom.rho0() {
                    OrderClass::TwoInD0
                } else {
                    OrderClass::TwoOutD0
                }
            }
            _ => OrderClass::ThreePlus,
        }
    }
}

/// Per-block accumulator: weight sums, per-history squared sums, and raw
/// event counts for every (bin, class) pair.
#[derive(Debug, Clone)]
pub(crate) struct BlockTally {
    pub histories: u64,
    pub sum_w: Vec<[f64; N_CLASSES]>,
    pub sum_w2: Vec<[f64; N_CLASSES]>,
    pub events: Vec<[u64; N_CLASSES]>,
}

impl BlockTally {
    pub fn new(n_bins: usize) -> Self {
        BlockTally {
            histories: 0,
            sum_w: vec![[0.0; N_CLASSES]; n_bins],
            sum_w2: vec![[0.0; N_CLASSES]; n_bins],
            events: vec![[0; N_CLASSES]; n_bins],
        }
    }

    /// Fold one history's detections in. Contributions of a single history
    /// to the same (bin, class) cell are summed before squaring, so the
    /// squared sums estimate the per-history variance.
    pub fn add_history(
        &mut self,
        detections: &[Detection],
        edges: &[f64],
        geom: &DetectorGeometry,
        scratch: &mut Vec<(usize, usize, f64)>,
    ) {
        self.histories += 1;
        scratch.clear();
        for det in detections {
            let Some(bin) = find_bin(edges, det.time) else {
                continue;
            };
            let class = OrderClass::classify(det, geom).index();
            self.events[bin][class] += 1;
            match scratch
                .iter_mut()
                .find(|(b, c, _)| *b == bin && *c == class)
            {
                Some(entry) => entry.2 += det.weight,
                None => scratch.push((bin, class, det.weight)),
            }
        }
        for &(bin, class, w) in scratch.iter() {
            self.sum_w[bin][class] += w;
            self.sum_w2[bin][class] += w * w;
        }
    }
}

fn find_bin(edges: &[f64], t: f64) -> Option<usize> {
    if t < edges[0] || t >= edges[edges.len() - 1] {
        return None;
    }
    let idx = match edges.binary_search_by(|e| e.partial_cmp(&t).unwrap()) {
        Ok(i) => i,
        Err(i) => i - 1,
    };
    Some(idx.min(edges.len() - 2))
}

/// Merged tally over all blocks of a run.
///
/// Rates are per emitted particle per unit time: `sum of weights /
/// (n_histories * bin width)`. Standard errors come from the block-to-block
/// spread of independent RNG streams; a per-history estimate from the
/// squared weight sums is kept alongside.
#[derive(Debug, Clone)]
pub struct McTally {
    edges: Vec<f64>,
    n_histories: u64,
    sum_w: Vec<[f64; N_CLASSES]>,
    sum_w2: Vec<[f64; N_CLASSES]>,
    events: Vec<[u64; N_CLASSES]>,
    /// Per block: (histories, per-bin weight sums).
    blocks: Vec<(u64, Vec<[f64; N_CLASSES]>)>,
}

impl McTally {
    pub(crate) fn from_blocks(edges: Vec<f64>, blocks_in: Vec<BlockTally>) -> Self {
        let n_bins = edges.len() - 1;
        let mut tally = McTally {
            edges,
            n_histories: 0,
            sum_w: vec![[0.0; N_CLASSES]; n_bins],
            sum_w2: vec![[0.0; N_CLASSES]; n_bins],
            events: vec![[0; N_CLASSES]; n_bins],
            blocks: Vec::with_capacity(blocks_in.len()),
        };
        // Deterministic merge: strict block order, independent of how the
        // blocks were scheduled.
        for b in blocks_in {
            tally.n_histories += b.histories;
            for bin in 0..n_bins {
                for c in 0..N_CLASSES {
                    tally.sum_w[bin][c] += b.sum_w[bin][c];
                    tally.sum_w2[bin][c] += b.sum_w2[bin][c];
                    tally.events[bin][c] += b.events[bin][c];
                }
            }
            tally.blocks.push((b.histories, b.sum_w));
        }
        tally
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn n_histories(&self) -> u64 {
        self.n_histories
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    pub fn bin_width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    pub fn events(&self, bin: usize, class: OrderClass) -> u64 {
        self.events[bin][class.index()]
    }

    pub fn sum_weight(&self, bin: usize, class: OrderClass) -> f64 {
        self.sum_w[bin][class.index()]
    }

    /// Rate estimate for one class, per emitted particle per unit time.
    pub fn rate(&self, bin: usize, class: OrderClass) -> f64 {
        self.sum_w[bin][class.index()] / (self.n_histories as f64 * self.bin_width(bin))
    }

    /// Total rate over all classes (the order decomposition is exhaustive by
    /// construction: every detection lands in exactly one class).
    pub fn total_rate(&self, bin: usize) -> f64 {
        (0..N_CLASSES).map(|c| self.sum_w[bin][c]).sum::<f64>()
            / (self.n_histories as f64 * self.bin_width(bin))
    }

    /// Standard error of [`McTally::rate`] from the block-to-block variance.
    pub fn stderr(&self, bin: usize, class: OrderClass) -> f64 {
        let c = class.index();
        let nb = self.blocks.len();
        if nb < 2 {
            return self.history_stderr(bin, class);
        }
        let dt = self.bin_width(bin);
        let rates: Vec<f64> = self
            .blocks
            .iter()
            .map(|(h, sums)| sums[bin][c] / (*h as f64 * dt))
            .collect();
        let mean = rates.iter().sum::<f64>() / nb as f64;
        let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / ((nb - 1) as f64);
        (var / nb as f64).sqrt()
    }

    /// Standard error from the per-history variance estimator
    /// `(sum w^2 - (sum w)^2 / N) / (N - 1)`.
    pub fn history_stderr(&self, bin: usize, class: OrderClass) -> f64 {
        let c = class.index();
        let n = self.n_histories as f64;
        if n < 2.0 {
            return 0.0;
        }
        let s1 = self.sum_w[bin][c];
        let s2 = self.sum_w2[bin][c];
        let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt() / self.bin_width(bin)
    }

    /// Variance of the summed weights per the per-history estimator; always
    /// non-negative.
    pub fn weight_variance(&self, bin: usize, class: OrderClass) -> f64 {
        let c = class.index();
        let n = self.n_histories as f64;
        let s1 = self.sum_w[bin][c];
        let s2 = self.sum_w2[bin][c];
        ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0)
    }

    /// Combined order-2 rate (full-acceptance plus remainder).
    pub fn order2_rate(&self, bin: usize) -> f64 {
        self.rate(bin, OrderClass::TwoInD0) + self.rate(bin, OrderClass::TwoOutD0)
    }

    pub fn order2_stderr(&self, bin: usize) -> f64 {
        let a = self.stderr(bin, OrderClass::TwoInD0);
        let b = self.stderr(bin, OrderClass::TwoOutD0);
        (a * a + b * b).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_lookup_covers_edges() {
        let edges = [0.0, 1.0, 2.0, 4.0];
        assert_eq!(find_bin(&edges, 0.0), Some(0));
        assert_eq!(find_bin(&edges, 0.999), Some(0));
        assert_eq!(find_bin(&edges, 1.0), Some(1));
        assert_eq!(find_bin(&edges, 3.9), Some(2));
        assert_eq!(find_bin(&edges, 4.0), None);
        assert_eq!(find_bin(&edges, -0.1), None);
    }

    #[test]
    fn per_history_consolidation() {
        let geom = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        let edges = vec![0.0, 10.0];
        let mut block = BlockTally::new(1);
        let mut scratch = Vec::new();
        // two order-1 contributions from one history in the same bin
        let d = |w: f64| Detection {
            time: 5.0,
            order: 1,
            weight: w,
            z_first: 2.5,
            z_second: 0.0,
            xi_second: 0.0,
        };
        block.add_history(&[d(0.5), d(0.25)], &edges, &geom, &mut scratch);
        assert_eq!(block.sum_w[0][0], 0.75);
        assert_eq!(block.sum_w2[0][0], 0.75 * 0.75);
        assert_eq!(block.events[0][0], 2);
    }

    #[test]
    fn variance_estimator_nonnegative_and_exact_for_bernoulli() {
        let geom = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        let edges = vec![0.0, 2.0];
        let mut block = BlockTally::new(1);
        let mut scratch = Vec::new();
        for k in 0..10 {
            let dets = if k < 3 {
                vec![Detection {
                    time: 1.0,
                    order: 1,
                    weight: 1.0,
                    z_first: 0.5,
                    z_second: 0.0,
                    xi_second: 0.0,
                }]
            } else {
                vec![]
            };
            block.add_history(&dets, &edges, &geom, &mut scratch);
        }
        let t = McTally::from_blocks(edges, vec![block]);
        assert_eq!(t.n_histories(), 10);
        assert_eq!(t.events(0, OrderClass::One), 3);
        // sample variance of {1,1,1,0,...,0}: (3 - 9/10)/9 = 7/30
        let v = t.weight_variance(0, OrderClass::One);
        assert!((v - 7.0 / 30.0).abs() < 1e-12);
    }
}
