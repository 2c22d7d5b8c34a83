//! Quantile histogram binning.
//!
//! Each feature gets a sorted list of split thresholds placed at midpoints
//! between adjacent observed values. A value's bin is the number of
//! thresholds strictly below it, so `bin <= k` is equivalent to
//! `value <= thresholds[k]` and tree traversal on raw values matches the
//! binned training data exactly.

use rayon::prelude::*;

/// Thresholds for one feature; `thresholds.len() + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    pub thresholds: Vec<f64>,
}

impl BinMapper {
    /// Builds thresholds from one column of training values (all finite).
    pub fn fit(values: &[f64], max_bins: usize) -> Self {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in sorted {
            match distinct.last_mut() {
                Some((last, n)) if *last == v => *n += 1,
                _ => distinct.push((v, 1)),
            }
        }
        if distinct.len() <= 1 {
            return Self { thresholds: Vec::new() };
        }

        // cut positions: index i means "split between distinct[i] and distinct[i+1]"
        let cuts: Vec<usize> = if distinct.len() <= max_bins {
            (0..distinct.len() - 1).collect()
        } else {
            let total = values.len() as f64;
            let per_bin = total / max_bins as f64;
            let mut cuts = Vec::with_capacity(max_bins - 1);
            let mut seen = 0usize;
            for (i, &(_, n)) in distinct[..distinct.len() - 1].iter().enumerate() {
                seen += n;
                if seen as f64 >= per_bin * (cuts.len() + 1) as f64 {
                    cuts.push(i);
                    if cuts.len() == max_bins - 1 {
                        break;
                    }
                }
            }
            cuts
        };

        let thresholds = cuts
            .into_iter()
            .map(|i| midpoint(distinct[i].0, distinct[i + 1].0))
            .collect();
        Self { thresholds }
    }

    pub fn num_bins(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn bin(&self, value: f64) -> u16 {
        self.thresholds.partition_point(|&t| t < value) as u16
    }
}

/// Midpoint of `a < b` that still separates them under `x <= t`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Column-major binned training matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub mappers: Vec<BinMapper>,
    /// `bins[feature][row]`.
    pub bins: Vec<Vec<u16>>,
    pub rows: usize,
}

impl BinnedMatrix {
    /// `values` is row-major with `cols` columns.
    pub fn build(values: &[f64], rows: usize, cols: usize, max_bins: usize) -> Self {
        let (mappers, bins): (Vec<_>, Vec<_>) = (0..cols)
            .into_par_iter()
            .map(|f| {
                let column: Vec<f64> = (0..rows).map(|r| values[r * cols + f]).collect();
                let mapper = BinMapper::fit(&column, max_bins);
                let binned = column.iter().map(|&v| mapper.bin(v)).collect();
                (mapper, binned)
            })
            .unzip();
        Self { mappers, bins, rows }
    }

    pub fn cols(&self) -> usize {
        self.mappers.len()
    }
}
