//! Oracles shared by the integration tests and the acceptance target. None
//! of them goes through the crate's simplex or branch-and-bound code.

#![allow(dead_code)]

use std::collections::HashMap;

use hetpart::models::{billed_quanta, plan_from_allocation, AllocationMatrix, ClusterModel, LatencyCoefficients, Matrix, Platform, Task, Workload};
use hetpart::rng::stream;
use rand::Rng;

/// Grid points per unit share.
pub const GRID: u32 = 200;
/// Grid points this close to the grid optimum are polished exactly.
pub const POLISH_BAND: f64 = 0.01;
const COST_TOL: f64 = 1e-9;

/// Random small cluster with nonzero setup times and short quanta, and a
/// cost cap at or above the cheapest single-platform cost. Every fifth seed
/// is uncapped.
pub fn small_instance(platforms: usize, tasks: usize, seed: u64) -> (ClusterModel, Option<f64>) {
    let mut rng = stream(seed, 42);
    let work: Vec<u64> = (0..tasks).map(|_| rng.random_range(1_000..50_000)).collect();
    let beta = Matrix::from_fn(platforms, tasks, |_, _| 10f64.powf(rng.random_range(-4.0..-2.7)));
    let gamma = Matrix::from_fn(platforms, tasks, |_, _| rng.random_range(0.5..10.0));
    let quanta = [5.0, 10.0, 30.0, 60.0];
    let platforms_v: Vec<Platform> = (0..platforms)
        .map(|i| Platform::new(format!("p{i}"), quanta[rng.random_range(0..quanta.len())], rng.random_range(0.05..1.0)).unwrap())
        .collect();
    let workload = Workload::new(work.iter().enumerate().map(|(j, &n)| Task::new(format!("t{j}"), n)).collect()).unwrap();
    let cluster = ClusterModel::new(platforms_v, workload, LatencyCoefficients::new(beta, gamma).unwrap()).unwrap();
    let cheapest = (0..platforms).map(|i| cluster.full_workload_cost(i)).fold(f64::INFINITY, f64::min);
    let cap = (seed % 5 != 0).then(|| cheapest * (1.0 + rng.random_range(0.0..1.5)));
    (cluster, cap)
}

fn cost_of(cluster: &ClusterModel, latency: &[f64]) -> f64 {
    latency
        .iter()
        .zip(cluster.platforms())
        .map(|(&l, p)| billed_quanta(l, p.quantum_s) as f64 * p.price_per_quantum)
        .sum()
}

struct Column {
    /// Per option: latency added to each platform and the support bits.
    latency: Vec<[f64; 3]>,
    support: Vec<u16>,
}

fn column_options(cluster: &ClusterModel, j: usize, bit_base: usize) -> Column {
    let mu = cluster.platform_count();
    let mut col = Column {
        latency: Vec::new(),
        support: Vec::new(),
    };
    let mut push = |k: [u32; 3]| {
        let mut lat = [0.0; 3];
        let mut bits = 0u16;
        for i in 0..mu {
            if k[i] > 0 {
                lat[i] = cluster.proportional_latency(i, j) * (k[i] as f64 / GRID as f64) + cluster.gamma(i, j);
                bits |= 1 << (bit_base + i);
            }
        }
        col.latency.push(lat);
        col.support.push(bits);
    };
    match mu {
        2 => (0..=GRID).for_each(|a| push([a, GRID - a, 0])),
        3 => {
            for a in 0..=GRID {
                for b in 0..=GRID - a {
                    push([a, b, GRID - a - b]);
                }
            }
        }
        _ => panic!("grid oracle supports 2 or 3 platforms"),
    }
    col
}

/// Exhaustive search of the share grid, D derived from each point.
pub struct GridSearch {
    /// Best makespan over grid points within the cap.
    pub best: f64,
    /// Best grid makespan for each (support, quanta) seen within
    /// [`POLISH_BAND`] of the optimum.
    pub near: HashMap<(u16, Vec<u64>), f64>,
    pub points: u64,
}

pub fn grid_search(cluster: &ClusterModel, cost_cap: Option<f64>) -> GridSearch {
    let (mu, tau) = (cluster.platform_count(), cluster.task_count());
    assert!(mu * tau <= 16);
    let columns: Vec<Column> = (0..tau).map(|j| column_options(cluster, j, j * mu)).collect();
    let cap = cost_cap.unwrap_or(f64::INFINITY) + COST_TOL;
    // Single-platform plans are grid points; start from the best of them.
    let mut best = f64::INFINITY;
    for i in 0..mu {
        let l = cluster.full_workload_latency(i);
        let mut lat = vec![0.0; mu];
        lat[i] = l;
        if cost_of(cluster, &lat) <= cap {
            best = best.min(l);
        }
    }
    let mut s = GridSearch {
        best,
        near: HashMap::new(),
        points: 0,
    };
    dfs(cluster, &columns, 0, [0.0; 3], 0, cap, &mut s);
    let limit = s.best * (1.0 + POLISH_BAND);
    s.near.retain(|_, v| *v <= limit);
    s
}

fn dfs(cluster: &ClusterModel, columns: &[Column], j: usize, lat: [f64; 3], bits: u16, cap: f64, s: &mut GridSearch) {
    let mu = cluster.platform_count();
    let col = &columns[j];
    let last = j + 1 == columns.len();
    for (o, add) in col.latency.iter().enumerate() {
        let threshold = s.best * (1.0 + POLISH_BAND);
        let mut next = lat;
        let mut span = 0.0f64;
        for i in 0..mu {
            next[i] += add[i];
            span = span.max(next[i]);
        }
        if span > threshold {
            continue;
        }
        if cost_of(cluster, &next[..mu]) > cap {
            continue;
        }
        let bits = bits | col.support[o];
        if last {
            s.points += 1;
            if span < s.best {
                s.best = span;
            }
            let quanta: Vec<u64> = (0..mu).map(|i| billed_quanta(next[i], cluster.platforms()[i].quantum_s)).collect();
            let entry = s.near.entry((bits, quanta)).or_insert(f64::INFINITY);
            *entry = entry.min(span);
        } else {
            dfs(cluster, columns, j + 1, next, bits, cap, s);
        }
    }
}

/// Minimizes `c.x` subject to `eq` rows held with equality and `le` rows as
/// `a.x <= b`, by solving every square system of active constraints.
/// Returns the optimal point.
pub fn vertex_enumeration(c: &[f64], eq: &[(Vec<f64>, f64)], le: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = c.len();
    let need = n.checked_sub(eq.len())?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen = Vec::with_capacity(need);
    choose(le.len(), need, 0, &mut chosen, &mut |active| {
        let rows: Vec<&(Vec<f64>, f64)> = eq.iter().chain(active.iter().map(|&k| &le[k])).collect();
        let Some(x) = solve_square(&rows, n) else {
            return;
        };
        let scale = |r: &(Vec<f64>, f64)| 1e-9 * (1.0 + r.1.abs() + r.0.iter().map(|a| a.abs()).sum::<f64>());
        let dot = |r: &(Vec<f64>, f64)| r.0.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        if le.iter().all(|r| dot(r) <= r.1 + scale(r)) && eq.iter().all(|r| (dot(r) - r.1).abs() <= scale(r)) {
            let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, x));
            }
        }
    });
    best.map(|(_, x)| x)
}

fn choose(m: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for i in start..m {
        if m - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        choose(m, k, i + 1, chosen, f);
        chosen.pop();
    }
}

fn solve_square(rows: &[&(Vec<f64>, f64)], n: usize) -> Option<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = rows.iter().map(|r| r.0.iter().copied().chain([r.1]).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        let norm = a[pivot].iter().take(n).fold(0.0f64, |m, v| m.max(v.abs()));
        if a[pivot][col].abs() <= 1e-11 * norm.max(1.0) {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Best makespan with the given support and at most `quanta` per platform,
/// rebuilt through the models module and checked against the cap.
pub fn polish(cluster: &ClusterModel, support: u16, quanta: &[u64], cost_cap: Option<f64>) -> Option<f64> {
    let (mu, tau) = (cluster.platform_count(), cluster.task_count());
    let on = |i: usize, j: usize| support & (1 << (j * mu + i)) != 0;
    let pairs: Vec<(usize, usize)> = (0..tau).flat_map(|j| (0..mu).map(move |i| (i, j))).filter(|&(i, j)| on(i, j)).collect();
    let n = pairs.len() + 1;
    let f = n - 1;
    let mut c = vec![0.0; n];
    c[f] = 1.0;
    let eq: Vec<(Vec<f64>, f64)> = (0..tau)
        .map(|j| {
            let mut row = vec![0.0; n];
            for (k, &(_, jj)) in pairs.iter().enumerate() {
                if jj == j {
                    row[k] = 1.0;
                }
            }
            (row, 1.0)
        })
        .collect();
    let mut le = Vec::new();
    for i in 0..mu {
        let setup: f64 = pairs.iter().filter(|p| p.0 == i).map(|&(_, j)| cluster.gamma(i, j)).sum();
        let mut row = vec![0.0; n];
        for (k, &(ii, j)) in pairs.iter().enumerate() {
            if ii == i {
                row[k] = cluster.proportional_latency(i, j);
            }
        }
        let mut with_f = row.clone();
        with_f[f] = -1.0;
        le.push((with_f, -setup));
        le.push((row, cluster.platforms()[i].quantum_s * quanta[i] as f64 - setup));
    }
    for k in 0..n {
        let mut row = vec![0.0; n];
        row[k] = -1.0;
        le.push((row, 0.0));
    }
    let x = vertex_enumeration(&c, &eq, &le)?;
    let raw = Matrix::from_fn(mu, tau, |i, j| pairs.iter().position(|&p| p == (i, j)).map_or(0.0, |k| x[k].max(0.0)));
    let plan = plan_from_allocation(cluster, &AllocationMatrix::snapped(&raw).ok()?).ok()?;
    cost_cap.is_none_or(|cap| plan.total_cost <= cap + COST_TOL).then_some(plan.makespan_s)
}

/// Grid optimum refined by exact solves over the near-optimal grid cells.
pub struct Oracle {
    pub grid: f64,
    pub polished: f64,
    pub points: u64,
}

impl Oracle {
    pub fn value(&self) -> f64 {
        self.grid.min(self.polished)
    }
}

pub fn oracle(cluster: &ClusterModel, cost_cap: Option<f64>) -> Oracle {
    let search = grid_search(cluster, cost_cap);
    let polished = search
        .near
        .keys()
        .filter_map(|(bits, quanta)| polish(cluster, *bits, quanta, cost_cap))
        .fold(f64::INFINITY, f64::min);
    Oracle {
        grid: search.best,
        polished,
        points: search.points,
    }
}

/// Plain O(n^2) dominance check.
pub fn pairwise_antichain(points: &[(f64, f64)]) -> bool {
    points.iter().enumerate().all(|(a, &p)| {
        points
            .iter()
            .enumerate()
            .all(|(b, &q)| a == b || (q != p && !(q.0 <= p.0 && q.1 <= p.1)))
    })
}
