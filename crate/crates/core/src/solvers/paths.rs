use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Directed graph over dense node indices; links are `(from, to)` pairs.
#[derive(Debug, Clone)]
pub struct Digraph {
    pub node_count: usize,
    pub links: Vec<(usize, usize)>,
    out: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(node_count: usize, links: Vec<(usize, usize)>) -> Self {
        let mut out = vec![Vec::new(); node_count];
        for (i, &(a, _)) in links.iter().enumerate() {
            out[a].push(i);
        }
        Digraph { node_count, links, out }
    }

    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.out[node]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree from `source`.
#[derive(Debug, Clone)]
pub struct PathTree {
    pub dist: Vec<f64>,
    pub pred_link: Vec<Option<usize>>,
}

impl PathTree {
    /// Links on the path to `target`, from target back to the source.
    pub fn links_to(&self, target: usize, graph: &Digraph) -> Vec<usize> {
        let mut out = Vec::new();
        let mut v = target;
        while let Some(l) = self.pred_link[v] {
            out.push(l);
            v = graph.links[l].0;
        }
        out
    }
}

/// Dijkstra over links with `cost[l]`; links with `usable[l] == false` are
/// skipped. Unreachable nodes keep `f64::INFINITY`.
pub fn shortest_paths(graph: &Digraph, source: usize, cost: &[f64], usable: &[bool]) -> PathTree {
    let mut dist = vec![f64::INFINITY; graph.node_count];
    let mut pred_link = vec![None; graph.node_count];
    let mut done = vec![false; graph.node_count];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry { dist: 0.0, node: source });
    while let Some(Entry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &l in graph.outgoing(u) {
            if !usable[l] {
                continue;
            }
            let v = graph.links[l].1;
            let nd = d + cost[l];
            if nd < dist[v] {
                dist[v] = nd;
                pred_link[v] = Some(l);
                heap.push(Entry { dist: nd, node: v });
            }
        }
    }
    PathTree { dist, pred_link }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diamond() {
        // 0 -> 1 -> 3 costs 1 + 1; 0 -> 2 -> 3 costs 1 + 5
        let g = Digraph::new(4, vec![(0, 1), (1, 3), (0, 2), (2, 3)]);
        let t = shortest_paths(&g, 0, &[1.0, 1.0, 1.0, 5.0], &[true; 4]);
        assert_eq!(t.dist, vec![0.0, 1.0, 1.0, 2.0]);
        assert_eq!(t.links_to(3, &g), vec![1, 0]);

        let t = shortest_paths(&g, 0, &[1.0, 1.0, 1.0, 5.0], &[true, false, true, true]);
        assert_eq!(t.dist[3], 6.0);
        let t = shortest_paths(&g, 3, &[1.0; 4], &[true; 4]);
        assert!(t.dist[0].is_infinite());
    }
}
