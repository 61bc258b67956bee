use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::Domain;

/// Number of candidate column swaps per design point in the maximin search.
const SWAPS_PER_POINT: usize = 40;

/// A plain random Latin hypercube in the unit cube: each column is a random
/// permutation of the `n` strata, jittered uniformly within its stratum.
pub fn random_lhc_unit<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    let nf = n as f64;
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (point, &stratum) in points.iter_mut().zip(&perm) {
            point[j] = (stratum as f64 + rng.gen::<f64>()) / nf;
        }
    }
    points
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min(dist2(&points[i], &points[j]));
        }
    }
    best.sqrt()
}

/// (minimum squared distance, number of pairs attaining it)
fn maximin_score(d2: &[Vec<f64>]) -> (f64, usize) {
    let mut min = f64::INFINITY;
    let mut count = 0;
    for (i, row) in d2.iter().enumerate() {
        for &v in &row[i + 1..] {
            if v < min {
                min = v;
                count = 1;
            } else if v == min {
                count += 1;
            }
        }
    }
    (min, count)
}

fn refresh_row(points: &[Vec<f64>], d2: &mut [Vec<f64>], r: usize) {
    for k in 0..points.len() {
        if k != r {
            let v = dist2(&points[r], &points[k]);
            d2[r][k] = v;
            d2[k][r] = v;
        }
    }
}

/// Maximin Latin hypercube in the unit cube. Starts from the random hypercube
/// drawn from `seed` and applies within-column swaps, keeping a swap whenever
/// it does not worsen (minimum distance, multiplicity of the minimum).
pub fn lhc_unit(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = random_lhc_unit(n, d, &mut rng);
    if n < 3 || d == 0 {
        return points;
    }
    let mut d2 = vec![vec![0.0; n]; n];
    for i in 0..n {
        refresh_row(&points, &mut d2, i);
    }
    let mut score = maximin_score(&d2);
    for _ in 0..SWAPS_PER_POINT * n {
        let col = rng.gen_range(0..d);
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        swap_col(&mut points, a, b, col);
        refresh_row(&points, &mut d2, a);
        refresh_row(&points, &mut d2, b);
        let candidate = maximin_score(&d2);
        let better = candidate.0 > score.0 || (candidate.0 == score.0 && candidate.1 <= score.1);
        if better {
            score = candidate;
        } else {
            swap_col(&mut points, a, b, col);
            refresh_row(&points, &mut d2, a);
            refresh_row(&points, &mut d2, b);
        }
    }
    points
}

fn swap_col(points: &mut [Vec<f64>], a: usize, b: usize, col: usize) {
    let tmp = points[a][col];
    points[a][col] = points[b][col];
    points[b][col] = tmp;
}

/// `n`-run maximin Latin hypercube scaled onto `domains`; rows are design
/// points. Bit-reproducible for a given seed.
pub fn lhc_design(n: usize, domains: &[Domain], seed: u64) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Validation(format!(
            "a Latin hypercube needs at least 2 runs, got {n}"
        )));
    }
    if domains.is_empty() {
        return Err(Error::Validation("at least one input domain is required".into()));
    }
    for (i, dom) in domains.iter().enumerate() {
        dom.validate().map_err(|e| e.context(format!("domain {i}")))?;
    }
    let unit = lhc_unit(n, domains.len(), seed);
    Ok(DMatrix::from_fn(n, domains.len(), |i, j| {
        domains[j].from_unit(unit[i][j])
    }))
}

/// Simulator runs over a design, as exchanged with the GP fitting code.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub input_names: Vec<String>,
    pub output_name: String,
    pub domains: Vec<Domain>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn design(&self) -> Result<crate::gp::Design> {
        crate::gp::Design::new(
            self.x.clone(),
            nalgebra::DVector::from_column_slice(&self.y),
            self.domains.clone(),
        )
    }

    /// Splits into the first `train` runs and the remainder.
    pub fn split(&self, train: usize) -> Result<(Ensemble, Ensemble)> {
        if train > self.len() {
            return Err(Error::Validation(format!(
                "training split {train} exceeds ensemble size {}",
                self.len()
            )));
        }
        let take = |range: std::ops::Range<usize>| Ensemble {
            x: self.x.rows(range.start, range.len()).into_owned(),
            y: self.y[range].to_vec(),
            ..self.clone()
        };
        Ok((take(0..train), take(train..self.len())))
    }
}

/// Writes one design point per row under a header naming the inputs and the output.
pub fn write_ensemble_csv<W: Write>(writer: W, ens: &Ensemble) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = ens.input_names.clone();
    header.push(ens.output_name.clone());
    w.write_record(&header)?;
    for i in 0..ens.len() {
        let mut rec: Vec<String> = ens.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ens.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an ensemble CSV; the last column is the output. Domains are supplied
/// by the caller since the file only carries the runs.
pub fn read_ensemble_csv<R: Read>(reader: R, domains: Vec<Domain>) -> Result<Ensemble> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::data("header", "need at least one input and one output column"));
    }
    let p = header.len() - 1;
    if domains.len() != p {
        return Err(Error::dims("ensemble domains", p, domains.len()));
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = Vec::with_capacity(p + 1);
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::data(
                    format!("row {}, column '{}'", r + 2, header[c]),
                    format!("cannot parse '{field}' as a number"),
                )
            })?;
            vals.push(v);
        }
        y.push(vals.pop().expect("non-empty record"));
        rows.push(vals);
    }
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok(Ensemble {
        input_names: header[..p].to_vec(),
        output_name: header[p].clone(),
        domains,
        x,
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_projection_hits_every_stratum_once() {
        let n = 37;
        let pts = lhc_unit(n, 4, 11);
        for j in 0..4 {
            let mut seen = vec![false; n];
            for p in &pts {
                let s = (p[j] * n as f64).floor() as usize;
                assert!(!seen[s], "stratum {s} hit twice in column {j}");
                seen[s] = true;
            }
        }
    }

    #[test]
    fn reproducible_per_seed() {
        let doms = vec![Domain::new(0.0, 1.0), Domain::new(-3.0, 5.0)];
        let a = lhc_design(20, &doms, 7).unwrap();
        let b = lhc_design(20, &doms, 7).unwrap();
        let c = lhc_design(20, &doms, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_domain_rejected() {
        let doms = vec![Domain::new(1.0, 1.0)];
        assert!(lhc_design(5, &doms, 0).is_err());
        assert!(lhc_design(1, &[Domain::new(0.0, 1.0)], 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let doms = vec![Domain::new(0.0, 2.0)];
        let ens = Ensemble {
            input_names: vec!["a".into()],
            output_name: "y".into(),
            domains: doms.clone(),
            x: DMatrix::from_column_slice(3, 1, &[0.1, 1.0 / 3.0, 1.7]),
            y: vec![1.0, 2.5, -0.25],
        };
        let mut buf = Vec::new();
        write_ensemble_csv(&mut buf, &ens).unwrap();
        let back = read_ensemble_csv(buf.as_slice(), doms).unwrap();
        assert_eq!(back, ens);
    }
}
