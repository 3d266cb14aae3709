mod common;

use gpa_core::graph::{build_features, parse_tudataset, stats, write_tudataset, FeaturePolicy, Graph, GraphDataset};
use proptest::prelude::*;

fn assert_well_formed(g: &Graph) {
    g.validate().unwrap();
    let n = g.num_nodes();
    for v in 0..n {
        let nb = g.neighbors(v);
        assert!(nb.windows(2).all(|w| w[0] < w[1]), "unsorted or duplicate neighbours");
        for &u in nb {
            assert_ne!(u, v, "self-loop");
            assert!(g.has_edge(u, v), "asymmetric edge ({v}, {u})");
        }
    }
    assert_eq!(g.csr_neighbors().len(), 2 * g.num_edges());
}

#[test]
fn mutag_matches_published_statistics() {
    let raw = parse_tudataset(common::data_dir().join("MUTAG"), "MUTAG").unwrap();
    let s = stats(&raw);
    assert_eq!(s.num_graphs, 188);
    assert_eq!(s.num_classes, 2);
    assert!((s.avg_nodes - 17.93).abs() < 0.01, "{}", s.avg_nodes);
    assert!((s.avg_edges - 19.79).abs() < 0.01, "{}", s.avg_edges);
    raw.graphs.iter().for_each(assert_well_formed);
}

#[test]
fn mutag_round_trips_through_files() {
    let ds = common::mutag();
    let dir = tempfile::tempdir().unwrap();
    write_tudataset(&ds, dir.path(), "M").unwrap();
    let back = build_features(&parse_tudataset(dir.path(), "M").unwrap(), FeaturePolicy::OneHotLabels).unwrap();
    assert_eq!(back.len(), ds.len());
    for (a, b) in ds.graphs.iter().zip(&back.graphs) {
        assert_eq!(a, b);
    }
}

fn arb_graph(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<i64>, usize)> {
    (1..=max_nodes).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..3 * n),
            prop::collection::vec(0i64..4, n),
            0usize..3,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_datasets_round_trip(specs in prop::collection::vec(arb_graph(12), 1..8)) {
        // build a raw dataset on disk, parse it, write it back, parse again
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        let mut a = String::new();
        let mut ind = String::new();
        let mut gl = String::new();
        let mut nl = String::new();
        let mut offset = 0;
        for (gi, (n, edges, labels, y)) in specs.iter().enumerate() {
            for &(u, v) in edges {
                a.push_str(&format!("{}, {}\n{}, {}\n", u + offset + 1, v + offset + 1, v + offset + 1, u + offset + 1));
            }
            for l in labels {
                ind.push_str(&format!("{}\n", gi + 1));
                nl.push_str(&format!("{l}\n"));
            }
            gl.push_str(&format!("{y}\n"));
            offset += n;
        }
        std::fs::write(p.join("R_A.txt"), a).unwrap();
        std::fs::write(p.join("R_graph_indicator.txt"), ind).unwrap();
        std::fs::write(p.join("R_graph_labels.txt"), gl).unwrap();
        std::fs::write(p.join("R_node_labels.txt"), nl).unwrap();

        let first = parse_tudataset(p, "R").unwrap();
        for (g, (n, edges, _, _)) in first.graphs.iter().zip(&specs) {
            assert_well_formed(g);
            prop_assert_eq!(g.num_nodes(), *n);
            for &(u, v) in edges {
                prop_assert_eq!(g.has_edge(u, v), u != v);
            }
        }
        let out = tempfile::tempdir().unwrap();
        write_tudataset(&first, out.path(), "R").unwrap();
        let second: GraphDataset = parse_tudataset(out.path(), "R").unwrap();
        prop_assert_eq!(&first.graphs, &second.graphs);
        prop_assert_eq!(&first.raw, &second.raw);
        prop_assert_eq!(first.num_classes, second.num_classes);
    }
}
