//! Randomized operator contracts shared by the property and acceptance suites.

use gpa_core::augment::{apply, node_drop, perturb_count, subgraph_size, AugConfig, AugType, RngStream};
use gpa_core::graph::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random graph with up to `max_n` nodes, density drawn per graph, and
/// nonzero one-hot-ish features so masking is observable.
pub fn random_graph(rng: &mut impl Rng, max_n: usize) -> Graph {
    let n = rng.gen_range(1..=max_n);
    let p: f64 = rng.gen_range(0.0..0.6);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let d = 3;
    let feats = (0..n * d).map(|_| rng.gen_range(0.5..1.5)).collect();
    Graph::from_edges(n, &edges, d, feats, Some(0)).unwrap()
}

fn well_formed(g: &Graph) -> Result<(), String> {
    g.validate().map_err(|e| e.to_string())?;
    for v in 0..g.num_nodes() {
        let nb = g.neighbors(v);
        if nb.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("node {v}: duplicate or unsorted neighbours"));
        }
        for &u in nb {
            if u == v || !g.has_edge(u, v) {
                return Err(format!("bad edge ({v}, {u})"));
            }
        }
    }
    Ok(())
}

fn zero_rows(g: &Graph) -> usize {
    (0..g.num_nodes())
        .filter(|&v| g.feature_row(v).iter().all(|&x| x == 0.0))
        .count()
}

/// One application of `ty`; checks validity, the count contract, and that a
/// second stream with the same coordinates reproduces the output.
pub fn check_once(ty: AugType, g: &Graph, cfg: &AugConfig, coords: [u64; 4]) -> Result<(), String> {
    let [s, id, e, slot] = coords;
    let out = apply(g, ty, cfg, &mut RngStream::new(s, id, e, slot));
    well_formed(&out)?;
    if out != apply(g, ty, cfg, &mut RngStream::new(s, id, e, slot)) {
        return Err("not reproducible".into());
    }
    let n = g.num_nodes();
    let m = g.num_edges();
    let ok = match ty {
        AugType::Identical => out == *g,
        AugType::NodeDrop => {
            let k = perturb_count(cfg.ratio, n);
            let expect = if k >= n { n } else { n - k };
            out.num_nodes() == expect
        }
        AugType::EdgePert => {
            let b = perturb_count(cfg.ratio, m);
            out.num_nodes() == n && out.features() == g.features() && (m - b..=m + b).contains(&out.num_edges())
        }
        AugType::Subgraph => out.num_nodes() == subgraph_size(cfg.ratio, n),
        AugType::AttMask => {
            out.num_nodes() == n
                && out.csr_neighbors() == g.csr_neighbors()
                && zero_rows(&out) == perturb_count(cfg.ratio, n)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(format!(
            "{ty:?} count contract broken: n={n} m={m} -> n'={} m'={}",
            out.num_nodes(),
            out.num_edges()
        ))
    }
}

/// `apps` randomized applications of `ty` with random graphs and ratios.
pub fn check_operator(ty: AugType, apps: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..apps {
        let g = random_graph(&mut rng, 30);
        let cfg = AugConfig {
            ratio: [0.0, 0.1, 0.2, 0.5, 1.0, rng.gen_range(0.0..1.0)][rng.gen_range(0..6)],
            walk_budget_factor: rng.gen_range(1..12),
        };
        check_once(ty, &g, &cfg, [seed, i as u64, rng.gen(), rng.gen()])
            .map_err(|e| format!("application {i} (ratio {}): {e}", cfg.ratio))?;
    }
    Ok(())
}

/// Per-node drop frequencies of `node_drop` at ratio 0.2 on a 10-node path.
pub fn node_drop_frequencies(draws: usize, seed: u64) -> Vec<f64> {
    let n = 10;
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    let feats: Vec<f64> = (0..n).map(|v| v as f64 + 1.0).collect();
    let g = Graph::from_edges(n, &edges, 1, feats, None).unwrap();
    let mut counts = vec![0usize; n];
    for d in 0..draws {
        let out = node_drop(&g, 0.2, &mut RngStream::new(seed, 0, d as u64, 0)).graph;
        let kept: Vec<usize> = (0..out.num_nodes())
            .map(|v| out.feature_row(v)[0] as usize - 1)
            .collect();
        for (v, c) in counts.iter_mut().enumerate() {
            if !kept.contains(&v) {
                *c += 1;
            }
        }
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}
