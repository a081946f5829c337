//! Neighbor search, affinity and the normalized similarity operator on a
//! small two-cluster batch.

use lend::dataset::{make_gaussian_clusters, ClusterParams, Split};
use lend::knn_graph::{dominant_label, find_knn, DEFAULT_GAMMA};
use lend::SimilarityGraph;

fn main() -> lend::Result<()> {
    let params = ClusterParams { num_classes: 2, per_class: 6, dim: 3, separation: 6.0, spread: 1.0, seed: 4 };
    let ds = make_gaussian_clusters(&params, Split::Train)?;
    let k = 3;

    let neighbors = find_knn(ds.features(), k)?;
    for i in 0..ds.len() {
        let list: Vec<String> = neighbors.neighbors(i).iter().map(|nb| format!("{}({:.3})", nb.index, nb.similarity)).collect();
        let dominant = dominant_label(i, &neighbors, ds.clean_labels())?;
        println!("{i:2} label {} dominant {dominant}  {}", ds.clean_labels()[i], list.join(" "));
    }

    let graph = SimilarityGraph::build(ds.ids(), ds.features(), k, DEFAULT_GAMMA)?;
    let w = graph.normalized();
    let cross: f64 = (0..ds.len())
        .flat_map(|i| (0..ds.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| ds.clean_labels()[i] != ds.clean_labels()[j])
        .map(|(i, j)| w[[i, j]])
        .sum();
    println!("degrees {:.3}", graph.degrees());
    println!("total W mass {:.4}, across clusters {:.4}", w.sum(), cross);

    let mut csv = Vec::new();
    graph.write_normalized_csv(&mut csv).expect("writing to memory");
    println!("first W entries:\n{}", String::from_utf8_lossy(&csv).lines().take(6).collect::<Vec<_>>().join("\n"));
    Ok(())
}
