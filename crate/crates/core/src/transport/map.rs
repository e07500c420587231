//! Grid-resolution transport maps pushing a density forward to an empirical
//! measure, with minimal sup displacement.

use std::io::Write;

use crate::domain::{DensityModel, Domain, SampleCloud};
use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

use super::flow::MinCostFlow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    /// Requested number of grid cells; the grid uses the smallest `G` with `G^d >= cells`.
    pub cells: usize,
    pub p: f64,
    /// Bisection stops once the bracket is within this fraction of the radius.
    pub rel_tol: f64,
    /// Largest cell count for which the p-cost tie-break is solved exactly.
    pub tie_break_limit: usize,
}

impl MapOptions {
    pub fn new(cells: usize) -> Self {
        Self { cells, p: 1.0, rel_tol: 5e-3, tie_break_limit: 4096 }
    }
}

/// Coupling between grid cells and samples realizing `(T_n)_# nu = nu_n`
/// at grid resolution.
#[derive(Debug, Clone)]
pub struct TransportMapGrid {
    pub cells_per_axis: usize,
    pub dim: usize,
    pub domain: Domain,
    /// `nu` mass of each cell (row-major, axis 0 slowest).
    pub cell_mass: Vec<f64>,
    /// Sample carrying the largest share of each cell (lowest index on ties).
    pub assignment: Vec<u32>,
    /// `(cell, sample, mass)` entries with positive mass.
    pub plan: Vec<(u32, u32, f64)>,
    /// Largest distance from any point of a used cell to its sample.
    pub sup_displacement: f64,
    pub p: f64,
    /// `sum mass * |center - X_j|^p` over the plan.
    pub p_cost: f64,
    pub cell_diameter: f64,
    /// Whether the p-cost tie-break was solved among bottleneck-optimal couplings.
    pub tie_broken: bool,
    pub n_samples: usize,
}

impl TransportMapGrid {
    pub fn num_cells(&self) -> usize {
        self.cell_mass.len()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        self.domain.extent(axis) / self.cells_per_axis as f64
    }

    pub fn cell_multi_index(&self, mut idx: usize) -> Vec<usize> {
        let g = self.cells_per_axis;
        let mut out = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            out[k] = idx % g;
            idx /= g;
        }
        out
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        cell_center(&self.domain, self.cells_per_axis, idx)
    }

    /// Mass received by each sample.
    pub fn sample_mass(&self) -> Vec<f64> {
        let mut out = vec![CompensatedSum::new(); self.n_samples];
        for &(_, j, m) in &self.plan {
            out[j as usize].add(m);
        }
        out.into_iter().map(|s| s.value()).collect()
    }

    /// `∫ |x - T_n(x)|^p dnu` at grid resolution.
    pub fn stagnation_cost(&self) -> f64 {
        self.p_cost
    }

    /// `∫ |u(x) - f(T_n(x))| dnu` with `u` evaluated at cell centers.
    pub fn label_mismatch<U: Fn(&[f64]) -> f64>(&self, u: U, f: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        let centers: Vec<f64> = (0..self.num_cells()).map(|c| u(&self.cell_center(c))).collect();
        for &(c, j, m) in &self.plan {
            acc.add(m * (centers[c as usize] - f[j as usize]).abs());
        }
        acc.value()
    }

    /// Transport-coupling bound on the TL^q distance between `(nu, u)` and `(nu_n, f)`:
    /// `sum mass * (|center - X_j|^q + |u(center) - f_j|^q)`.
    pub fn tl_bound<U: Fn(&[f64]) -> f64>(&self, cloud: &SampleCloud, u: U, f: &[f64], q: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        let centers: Vec<Vec<f64>> = (0..self.num_cells()).map(|c| self.cell_center(c)).collect();
        let values: Vec<f64> = centers.iter().map(|c| u(c)).collect();
        for &(c, j, m) in &self.plan {
            let d = crate::numerics::dist(&centers[c as usize], cloud.point(j as usize));
            acc.add(m * (d.powf(q) + (values[c as usize] - f[j as usize]).abs().powf(q)));
        }
        acc.value()
    }

    /// Writes `cell_index,sample_index` rows using the dominant assignment.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell_index", "sample_index"])?;
        for (c, j) in self.assignment.iter().enumerate() {
            w.write_record([c.to_string(), j.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn cell_center(domain: &Domain, g: usize, mut idx: usize) -> Vec<f64> {
    let d = domain.dim();
    let mut out = vec![0.0; d];
    for k in (0..d).rev() {
        let i = idx % g;
        idx /= g;
        let h = domain.extent(k) / g as f64;
        out[k] = domain.lo()[k] + (i as f64 + 0.5) * h;
    }
    out
}

/// Distance from `x` to the farthest point of the box `[lo, hi]`.
#[inline]
fn farthest(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..x.len() {
        let a = (x[k] - lo[k]).abs().max((hi[k] - x[k]).abs());
        s += a * a;
    }
    s.sqrt()
}

pub fn build_transport_map(model: &DensityModel, cloud: &SampleCloud, cells: usize) -> Result<TransportMapGrid> {
    build_transport_map_with(model, cloud, &MapOptions::new(cells))
}

/// Candidate cell-to-sample edges within a radius, sorted by distance per cell.
struct Candidates {
    radius: f64,
    cell_off: Vec<usize>,
    sample: Vec<u32>,
    dist: Vec<f64>,
    /// Reverse index: for each sample, the edge ids that reach it.
    sample_off: Vec<usize>,
    rev_edge: Vec<u32>,
    rev_cell: Vec<u32>,
}

struct Geometry<'a> {
    domain: &'a Domain,
    g: usize,
    cloud: &'a SampleCloud,
}

impl Geometry<'_> {
    fn cell_box(&self, idx: usize, lo: &mut [f64], hi: &mut [f64]) {
        let mut rest = idx;
        for k in (0..self.domain.dim()).rev() {
            let i = rest % self.g;
            rest /= self.g;
            let h = self.domain.extent(k) / self.g as f64;
            lo[k] = self.domain.lo()[k] + i as f64 * h;
            hi[k] = lo[k] + h;
        }
    }

    fn candidates(&self, radius: f64) -> Candidates {
        let d = self.domain.dim();
        let n = self.cloud.len();
        let num_cells = self.g.pow(d as u32);
        // Bucket samples on a grid of side >= radius.
        let per_axis: Vec<usize> = (0..d)
            .map(|k| ((self.domain.extent(k) / radius).floor() as usize).clamp(1, 1 << 12))
            .collect();
        let total: usize = per_axis.iter().product();
        let bucket_of = |x: &[f64]| -> usize {
            let mut b = 0;
            for k in 0..d {
                let t = (x[k] - self.domain.lo()[k]) / self.domain.extent(k);
                let i = ((t * per_axis[k] as f64) as usize).min(per_axis[k] - 1);
                b = b * per_axis[k] + i;
            }
            b
        };
        let mut counts = vec![0usize; total + 1];
        for x in self.cloud.iter() {
            counts[bucket_of(x) + 1] += 1;
        }
        for b in 0..total {
            counts[b + 1] += counts[b];
        }
        let mut fill = counts.clone();
        let mut bucket_items = vec![0u32; n];
        for (j, x) in self.cloud.iter().enumerate() {
            let b = bucket_of(x);
            bucket_items[fill[b]] = j as u32;
            fill[b] += 1;
        }

        let mut cell_off = Vec::with_capacity(num_cells + 1);
        cell_off.push(0);
        let mut sample = Vec::new();
        let mut dist = Vec::new();
        let (mut lo, mut hi) = (vec![0.0; d], vec![0.0; d]);
        let mut scratch: Vec<(f64, u32)> = Vec::new();
        let mut idx = vec![0usize; d];
        let mut range_lo = vec![0usize; d];
        let mut range_hi = vec![0usize; d];
        for c in 0..num_cells {
            self.cell_box(c, &mut lo, &mut hi);
            for k in 0..d {
                let to_bucket = |v: f64| {
                    let t = (v - self.domain.lo()[k]) / self.domain.extent(k);
                    ((t * per_axis[k] as f64).floor().max(0.0) as usize).min(per_axis[k] - 1)
                };
                range_lo[k] = to_bucket(lo[k] - radius);
                range_hi[k] = to_bucket(hi[k] + radius);
            }
            scratch.clear();
            idx.copy_from_slice(&range_lo);
            'outer: loop {
                let mut b = 0;
                for k in 0..d {
                    b = b * per_axis[k] + idx[k];
                }
                for &j in &bucket_items[counts[b]..counts[b + 1]] {
                    let r = farthest(&lo, &hi, self.cloud.point(j as usize));
                    if r <= radius {
                        scratch.push((r, j));
                    }
                }
                for k in (0..d).rev() {
                    if idx[k] < range_hi[k] {
                        idx[k] += 1;
                        continue 'outer;
                    }
                    idx[k] = range_lo[k];
                }
                break;
            }
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(r, j) in &scratch {
                dist.push(r);
                sample.push(j);
            }
            cell_off.push(sample.len());
        }

        let mut sample_off = vec![0usize; n + 1];
        for &j in &sample {
            sample_off[j as usize + 1] += 1;
        }
        for j in 0..n {
            sample_off[j + 1] += sample_off[j];
        }
        let mut pos = sample_off.clone();
        let mut rev_edge = vec![0u32; sample.len()];
        let mut rev_cell = vec![0u32; sample.len()];
        for c in 0..num_cells {
            for e in cell_off[c]..cell_off[c + 1] {
                let j = sample[e] as usize;
                rev_edge[pos[j]] = e as u32;
                rev_cell[pos[j]] = c as u32;
                pos[j] += 1;
            }
        }
        Candidates { radius, cell_off, sample, dist, sample_off, rev_edge, rev_cell }
    }
}

/// Flow state for the capacitated feasibility problem at a threshold radius.
struct FlowState<'a> {
    cand: &'a Candidates,
    supply: &'a [i64],
    demand: &'a [i64],
    flow: Vec<i64>,
    cell_rem: Vec<i64>,
    sample_rem: Vec<i64>,
    active_end: Vec<usize>,
    radius: f64,
    // Scratch for the phases.
    cell_level: Vec<u32>,
    sample_level: Vec<u32>,
    cell_it: Vec<usize>,
    sample_it: Vec<usize>,
    queue: Vec<u32>,
}

const UNSEEN: u32 = u32::MAX;

enum Node {
    Cell(usize),
    Sample(usize),
}

impl<'a> FlowState<'a> {
    fn new(cand: &'a Candidates, supply: &'a [i64], demand: &'a [i64]) -> Self {
        let nc = supply.len();
        let ns = demand.len();
        Self {
            cand,
            supply,
            demand,
            flow: vec![0; cand.sample.len()],
            cell_rem: supply.to_vec(),
            sample_rem: demand.to_vec(),
            active_end: cand.cell_off[..nc].to_vec(),
            radius: 0.0,
            cell_level: vec![UNSEEN; nc],
            sample_level: vec![UNSEEN; ns],
            cell_it: vec![0; nc],
            sample_it: vec![0; ns],
            queue: Vec::new(),
        }
    }

    /// Moves the threshold, dropping flow on edges that become inactive.
    fn set_radius(&mut self, r: f64) {
        let c = self.cand;
        for cell in 0..self.supply.len() {
            let (start, end) = (c.cell_off[cell], c.cell_off[cell + 1]);
            let new_end = start + c.dist[start..end].partition_point(|&x| x <= r);
            if new_end < self.active_end[cell] {
                for e in new_end..self.active_end[cell] {
                    let f = self.flow[e];
                    if f > 0 {
                        self.flow[e] = 0;
                        self.cell_rem[cell] += f;
                        self.sample_rem[c.sample[e] as usize] += f;
                    }
                }
            }
            self.active_end[cell] = new_end;
        }
        self.radius = r;
    }

    fn greedy(&mut self) {
        let c = self.cand;
        for cell in 0..self.supply.len() {
            for e in c.cell_off[cell]..self.active_end[cell] {
                if self.cell_rem[cell] == 0 {
                    break;
                }
                let j = c.sample[e] as usize;
                let push = self.cell_rem[cell].min(self.sample_rem[j]);
                if push > 0 {
                    self.flow[e] += push;
                    self.cell_rem[cell] -= push;
                    self.sample_rem[j] -= push;
                }
            }
        }
    }

    fn deficit(&self) -> i64 {
        self.cell_rem.iter().sum()
    }

    /// Runs blocking-flow phases until no augmenting path remains.
    /// Returns true when all supply is routed.
    fn maximize(&mut self) -> bool {
        loop {
            if self.deficit() == 0 {
                return true;
            }
            if !self.bfs() {
                return false;
            }
            self.blocking_flow();
        }
    }

    fn bfs(&mut self) -> bool {
        let c = self.cand;
        self.cell_level.fill(UNSEEN);
        self.sample_level.fill(UNSEEN);
        self.queue.clear();
        for (cell, &rem) in self.cell_rem.iter().enumerate() {
            if rem > 0 {
                self.cell_level[cell] = 0;
                self.queue.push(cell as u32);
            }
        }
        // Cells sit on even levels, samples on odd levels.
        let mut target_level = UNSEEN;
        let mut samples: Vec<u32> = Vec::new();
        let mut level = 0u32;
        let mut frontier: Vec<u32> = std::mem::take(&mut self.queue);
        while !frontier.is_empty() && level < target_level {
            samples.clear();
            for &cell in &frontier {
                let cell = cell as usize;
                for e in c.cell_off[cell]..self.active_end[cell] {
                    let j = c.sample[e] as usize;
                    if self.sample_level[j] == UNSEEN {
                        self.sample_level[j] = level + 1;
                        samples.push(j as u32);
                        if self.sample_rem[j] > 0 {
                            target_level = level + 1;
                        }
                    }
                }
            }
            if target_level != UNSEEN {
                break;
            }
            let mut next = Vec::new();
            for &j in &samples {
                let j = j as usize;
                for k in c.sample_off[j]..c.sample_off[j + 1] {
                    let e = c.rev_edge[k] as usize;
                    if self.flow[e] > 0 {
                        let cell = c.rev_cell[k] as usize;
                        if self.cell_level[cell] == UNSEEN {
                            self.cell_level[cell] = level + 2;
                            next.push(cell as u32);
                        }
                    }
                }
            }
            frontier = next;
            level += 2;
        }
        self.queue = frontier;
        if target_level == UNSEEN {
            return false;
        }
        // Samples beyond the target level are unusable this phase.
        for l in self.sample_level.iter_mut() {
            if *l != UNSEEN && *l > target_level {
                *l = UNSEEN;
            }
        }
        true
    }

    fn blocking_flow(&mut self) {
        let c = self.cand;
        for cell in 0..self.supply.len() {
            self.cell_it[cell] = c.cell_off[cell];
        }
        for j in 0..self.demand.len() {
            self.sample_it[j] = c.sample_off[j];
        }
        // Path as a list of edge ids; even positions forward, odd positions backward.
        let mut path: Vec<usize> = Vec::new();
        let mut stack: Vec<Node> = Vec::new();
        for root in 0..self.supply.len() {
            while self.cell_rem[root] > 0 && self.cell_level[root] == 0 {
                path.clear();
                stack.clear();
                stack.push(Node::Cell(root));
                let mut reached = None;
                while let Some(top) = stack.last() {
                    match *top {
                        Node::Cell(cell) => {
                            let lvl = self.cell_level[cell];
                            let mut moved = false;
                            while self.cell_it[cell] < self.active_end[cell] {
                                let e = self.cell_it[cell];
                                let j = c.sample[e] as usize;
                                if self.sample_level[j] == lvl + 1 {
                                    path.push(e);
                                    stack.push(Node::Sample(j));
                                    moved = true;
                                    break;
                                }
                                self.cell_it[cell] += 1;
                            }
                            if !moved {
                                self.cell_level[cell] = UNSEEN;
                                stack.pop();
                                path.pop();
                                if let Some(Node::Sample(j)) = stack.last() {
                                    self.sample_it[*j] += 1;
                                }
                            }
                        }
                        Node::Sample(j) => {
                            if self.sample_rem[j] > 0 {
                                reached = Some(j);
                                break;
                            }
                            let lvl = self.sample_level[j];
                            let mut moved = false;
                            while self.sample_it[j] < c.sample_off[j + 1] {
                                let k = self.sample_it[j];
                                let e = c.rev_edge[k] as usize;
                                let cell = c.rev_cell[k] as usize;
                                if self.flow[e] > 0 && self.cell_level[cell] == lvl + 1 {
                                    path.push(e);
                                    stack.push(Node::Cell(cell));
                                    moved = true;
                                    break;
                                }
                                self.sample_it[j] += 1;
                            }
                            if !moved {
                                self.sample_level[j] = UNSEEN;
                                stack.pop();
                                path.pop();
                                if let Some(Node::Cell(cell)) = stack.last() {
                                    self.cell_it[*cell] += 1;
                                }
                            }
                        }
                    }
                }
                let Some(end) = reached else {
                    break;
                };
                let mut push = self.cell_rem[root].min(self.sample_rem[end]);
                for (pos, &e) in path.iter().enumerate() {
                    if pos % 2 == 1 {
                        push = push.min(self.flow[e]);
                    }
                }
                debug_assert!(push > 0);
                for (pos, &e) in path.iter().enumerate() {
                    if pos % 2 == 0 {
                        self.flow[e] += push;
                    } else {
                        self.flow[e] -= push;
                    }
                }
                self.cell_rem[root] -= push;
                self.sample_rem[end] -= push;
            }
        }
    }
}

/// Builds a coupling of grid cells to samples with minimal sup displacement
/// (up to `rel_tol`), using integral capacities.
pub fn build_transport_map_with(
    model: &DensityModel,
    cloud: &SampleCloud,
    opts: &MapOptions,
) -> Result<TransportMapGrid> {
    let domain = model.domain();
    let d = domain.dim();
    if cloud.dim() != d {
        return Err(Error::SizeMismatch { left: cloud.dim(), right: d });
    }
    let n = cloud.len();
    if opts.cells < n {
        return Err(Error::InvalidArgument(format!("need at least as many cells as samples ({} < {n})", opts.cells)));
    }
    if !(opts.p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {}", opts.p)));
    }
    for x in cloud.iter() {
        domain.check_point(x)?;
    }
    let mut g = (opts.cells as f64).powf(1.0 / d as f64).floor() as usize;
    while g.pow(d as u32) < opts.cells {
        g += 1;
    }
    let num_cells = g.pow(d as u32);
    let geometry = Geometry { domain, g, cloud };

    // Cell masses and integral supplies.
    let (mut lo, mut hi) = (vec![0.0; d], vec![0.0; d]);
    let cell_mass: Vec<f64> = (0..num_cells)
        .map(|c| {
            geometry.cell_box(c, &mut lo, &mut hi);
            model.box_mass(&lo, &hi)
        })
        .collect();
    let (supply, demand, total) = if model.is_uniform() {
        (vec![n as i64; num_cells], vec![num_cells as i64; n], (n * num_cells) as i64)
    } else {
        // Integral units fine enough that rounding stays far below 1e-9 per sample.
        let scale = 2f64.powi(50);
        let supply: Vec<i64> = cell_mass.iter().map(|m| (m * scale).round() as i64).collect();
        let total: i64 = supply.iter().sum();
        let base = total / n as i64;
        let extra = (total % n as i64) as usize;
        let demand = (0..n).map(|j| base + i64::from(j < extra)).collect();
        (supply, demand, total)
    };

    let cell_diameter = (0..d).map(|k| (domain.extent(k) / g as f64).powi(2)).sum::<f64>().sqrt();
    // Typical largest nearest-sample distance, with room for the bottleneck.
    let spacing = (domain.volume() * (n as f64).ln().max(1.0) / (crate::domain::ball_volume(d, 1.0) * n as f64))
        .powf(1.0 / d as f64);
    let mut radius = (2.0 * spacing + cell_diameter).min(domain.diameter());

    let (cand, r_star, flow) = loop {
        let cand = geometry.candidates(radius);
        if (0..num_cells).any(|c| cand.cell_off[c] == cand.cell_off[c + 1]) {
            if radius >= domain.diameter() {
                return Err(Error::Infeasible("cells without candidate samples".into()));
            }
            radius = (2.0 * radius).min(domain.diameter());
            continue;
        }
        let lower = (0..num_cells).map(|c| cand.dist[cand.cell_off[c]]).fold(0.0, f64::max);
        if 1.6 * lower > radius && radius < domain.diameter() {
            radius = (1.6 * lower).min(domain.diameter());
            continue;
        }
        match bisect(&cand, &supply, &demand, lower, opts.rel_tol) {
            Some((r, flow)) => break (cand, r, flow),
            None if radius >= domain.diameter() => {
                return Err(Error::Infeasible("no feasible coupling within the domain diameter".into()))
            }
            None => radius = (1.6 * radius).min(domain.diameter()),
        }
    };

    let centers: Vec<Vec<f64>> = (0..num_cells).map(|c| cell_center(domain, g, c)).collect();
    let mut entries: Vec<(u32, u32, i64)> = Vec::new();
    let mut tie_broken = false;
    if num_cells <= opts.tie_break_limit {
        // Minimize the p-cost among couplings using edges within r_star.
        let nodes = num_cells + n + 2;
        let (s, t) = (num_cells + n, num_cells + n + 1);
        let mut mcf = MinCostFlow::new(nodes);
        for (c, &sup) in supply.iter().enumerate() {
            mcf.add_edge(s, c, sup, 0.0);
        }
        let mut handles = Vec::new();
        for c in 0..num_cells {
            for e in cand.cell_off[c]..cand.cell_off[c + 1] {
                if cand.dist[e] <= r_star {
                    let j = cand.sample[e] as usize;
                    let cost = crate::numerics::dist(&centers[c], cloud.point(j)).powf(opts.p);
                    handles.push((c, j, mcf.add_edge(c, num_cells + j, total, cost)));
                }
            }
        }
        for (j, &dem) in demand.iter().enumerate() {
            mcf.add_edge(num_cells + j, t, dem, 0.0);
        }
        let (sent, _) = mcf.solve(s, t, total);
        if sent == total {
            for (c, j, h) in handles {
                let f = mcf.flow_on(h);
                if f > 0 {
                    entries.push((c as u32, j as u32, f));
                }
            }
            tie_broken = true;
        }
    }
    if !tie_broken {
        for c in 0..num_cells {
            for e in cand.cell_off[c]..cand.cell_off[c + 1] {
                if flow[e] > 0 {
                    entries.push((c as u32, cand.sample[e], flow[e]));
                }
            }
        }
    }

    let mut assignment = vec![0u32; num_cells];
    let mut best = vec![0i64; num_cells];
    let mut sup: f64 = 0.0;
    let mut p_cost = CompensatedSum::new();
    let mut plan = Vec::with_capacity(entries.len());
    for &(c, j, f) in &entries {
        let (ci, ji) = (c as usize, j as usize);
        if f > best[ci] || (f == best[ci] && j < assignment[ci]) {
            best[ci] = f;
            assignment[ci] = j;
        }
        geometry.cell_box(ci, &mut lo, &mut hi);
        sup = sup.max(farthest(&lo, &hi, cloud.point(ji)));
        let mass = f as f64 / total as f64;
        p_cost.add(mass * crate::numerics::dist(&centers[ci], cloud.point(ji)).powf(opts.p));
        plan.push((c, j, mass));
    }

    Ok(TransportMapGrid {
        cells_per_axis: g,
        dim: d,
        domain: domain.clone(),
        cell_mass,
        assignment,
        plan,
        sup_displacement: sup,
        p: opts.p,
        p_cost: p_cost.value(),
        cell_diameter,
        tie_broken,
        n_samples: n,
    })
}

/// Smallest feasible threshold within `rel_tol`, with its flow. `None` if
/// infeasible even at the candidate radius.
fn bisect(cand: &Candidates, supply: &[i64], demand: &[i64], lower: f64, rel_tol: f64) -> Option<(f64, Vec<i64>)> {
    let mut state = FlowState::new(cand, supply, demand);
    let mut lo = lower;
    // A cold start well above the bound is cheap; later tests are warm.
    let mut hi = (lower * 1.5).min(cand.radius);
    loop {
        state.set_radius(hi);
        state.greedy();
        if state.maximize() {
            break;
        }
        lo = hi;
        if hi >= cand.radius {
            return None;
        }
        hi = (hi * 1.3).min(cand.radius);
    }
    let mut best_flow = state.flow.clone();
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        state.set_radius(mid);
        state.greedy();
        if state.maximize() {
            hi = mid;
            best_flow.copy_from_slice(&state.flow);
        } else {
            lo = mid;
        }
    }
    // Snap to the largest edge actually used by the best flow.
    let r = (0..supply.len())
        .flat_map(|c| cand.cell_off[c]..cand.cell_off[c + 1])
        .filter(|&e| best_flow[e] > 0)
        .map(|e| cand.dist[e])
        .fold(0.0, f64::max);
    Some((r, best_flow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::sample_iid;

    fn uniform2() -> DensityModel {
        DensityModel::uniform(Domain::unit(2).unwrap())
    }

    fn check_marginals(map: &TransportMapGrid) {
        let n = map.n_samples as f64;
        for m in map.sample_mass() {
            assert!((m - 1.0 / n).abs() < 1e-9, "sample mass {m}");
        }
        let mut per_cell = vec![0.0; map.num_cells()];
        for &(c, _, m) in &map.plan {
            per_cell[c as usize] += m;
        }
        for (a, b) in per_cell.iter().zip(&map.cell_mass) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_takes_everything() {
        let cloud = SampleCloud::from_points(2, vec![0.3, 0.6], 0, "uniform").unwrap();
        let map = build_transport_map(&uniform2(), &cloud, 16).unwrap();
        assert!(map.assignment.iter().all(|&j| j == 0));
        let corner = (0.7f64 * 0.7 + 0.6 * 0.6).sqrt();
        assert!((map.sup_displacement - corner).abs() < 1e-12);
        check_marginals(&map);
    }

    #[test]
    fn quadrant_centers() {
        let pts = vec![0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75];
        let cloud = SampleCloud::from_points(2, pts, 0, "uniform").unwrap();
        let map = build_transport_map(&uniform2(), &cloud, 64).unwrap();
        let mut counts = [0; 4];
        for &j in &map.assignment {
            counts[j as usize] += 1;
        }
        assert_eq!(counts, [16; 4]);
        assert!(map.sup_displacement <= 2f64.sqrt() / 4.0 + map.cell_diameter + 1e-12);
        check_marginals(&map);
    }

    #[test]
    fn too_few_cells_is_an_error() {
        let cloud = sample_iid(&uniform2(), 10, 1).unwrap();
        assert!(build_transport_map(&uniform2(), &cloud, 9).is_err());
    }

    #[test]
    fn marginals_hold_for_fractional_splits() {
        let cloud = sample_iid(&uniform2(), 7, 2).unwrap();
        let map = build_transport_map(&uniform2(), &cloud, 50).unwrap();
        check_marginals(&map);
        let aff = DensityModel::affine(Domain::unit(2).unwrap(), 1.0, vec![0.5, 0.0]).unwrap();
        let cloud = sample_iid(&aff, 30, 3).unwrap();
        let map = build_transport_map(&aff, &cloud, 30 * 16).unwrap();
        check_marginals(&map);
        assert!(map.tie_broken);
    }

    #[test]
    fn larger_instance_without_tie_break() {
        let cloud = sample_iid(&uniform2(), 512, 4).unwrap();
        let opts = MapOptions { tie_break_limit: 0, ..MapOptions::new(512 * 16) };
        let map = build_transport_map_with(&uniform2(), &cloud, &opts).unwrap();
        check_marginals(&map);
        assert!(!map.tie_broken);
        assert!(map.sup_displacement < 0.25);
    }
}
