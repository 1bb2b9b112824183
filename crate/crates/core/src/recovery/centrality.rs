use std::collections::{BTreeMap, VecDeque};

use crate::network::{ComponentKind, IntegratedNetwork, Network};

/// Unweighted shortest-path edge betweenness (Brandes accumulation).
///
/// Undirected graphs count each unordered pair once; directed graphs count
/// ordered pairs. Parallel edges split the paths running through them.
///
/// ```
/// use lifeline::recovery::edge_betweenness;
/// // a - b - c
/// assert_eq!(edge_betweenness(3, &[(0, 1), (1, 2)], false), vec![2.0, 2.0]);
/// ```
pub fn edge_betweenness(node_count: usize, edges: &[(usize, usize)], directed: bool) -> Vec<f64> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); node_count];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, e));
        if !directed {
            adj[b].push((a, e));
        }
    }
    let mut score = vec![0.0; edges.len()];
    for s in 0..node_count {
        let mut order = Vec::with_capacity(node_count);
        let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); node_count];
        let mut sigma = vec![0.0f64; node_count];
        let mut dist = vec![usize::MAX; node_count];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(w, e) in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push((v, e));
                }
            }
        }
        let mut delta = vec![0.0; node_count];
        for &w in order.iter().rev() {
            for &(v, e) in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                score[e] += c;
                delta[v] += c;
            }
        }
    }
    if !directed {
        for x in &mut score {
            *x /= 2.0;
        }
    }
    score
}

/// Betweenness of every link-like component of `network` on its
/// undamaged graph: pipes and pumps, lines, transformers and switches, road
/// links (directed).
pub fn component_betweenness(net: &IntegratedNetwork, network: Network) -> BTreeMap<String, f64> {
    let comps = net.components(network);
    let nodes: Vec<&str> = comps
        .iter()
        .filter(|c| c.kind.is_graph_node())
        .map(|c| c.id.as_str())
        .collect();
    let index = |id: &str| nodes.iter().position(|n| *n == id);
    let mut ids = Vec::new();
    let mut edges = Vec::new();
    for c in comps {
        if let Some((a, b)) = c.kind.endpoints() {
            if let (Some(a), Some(b)) = (index(a), index(b)) {
                ids.push(c.id.clone());
                edges.push((a, b));
            }
        }
    }
    let directed = comps.iter().any(|c| matches!(c.kind, ComponentKind::RoadLink(_)));
    ids.into_iter().zip(edge_betweenness(nodes.len(), &edges, directed)).collect()
}
