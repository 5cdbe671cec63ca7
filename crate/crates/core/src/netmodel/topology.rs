use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("cycle detected through line {from}-{to}")]
    CycleDetected { from: usize, to: usize },
    #[error("bus {0} is not connected to bus 0")]
    Disconnected(usize),
    #[error("line {from}-{to} references a bus outside 0..{n}")]
    UnknownBus { from: usize, to: usize, n: usize },
}

/// Radial structure rooted at bus 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Parent-before-child visiting order starting at bus 0.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    /// Line feeding each bus (None for the root).
    pub parent_line: Vec<Option<usize>>,
    pub child_lines: Vec<Vec<usize>>,
    /// Whether line `l` as given runs child-to-parent and needs flipping.
    pub reversed: Vec<bool>,
}

/// Orders buses parent-before-child. Lines may be given in either
/// direction; `reversed` records which ones point away from the root.
pub fn validate_topology(n: usize, lines: &[(usize, usize)]) -> Result<Topology, TopologyError> {
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (l, &(from, to)) in lines.iter().enumerate() {
        if from >= n || to >= n {
            return Err(TopologyError::UnknownBus { from, to, n });
        }
        let (a, b) = (find(&mut uf, from), find(&mut uf, to));
        if a == b {
            return Err(TopologyError::CycleDetected { from, to });
        }
        uf[a] = b;
        adj[from].push((to, l));
        adj[to].push((from, l));
    }
    let mut parent = vec![None; n];
    let mut parent_line = vec![None; n];
    let mut child_lines = vec![Vec::new(); n];
    let mut reversed = vec![false; lines.len()];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    if n > 0 {
        seen[0] = true;
        queue.push_back(0);
    }
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, l) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                parent_line[v] = Some(l);
                child_lines[u].push(l);
                reversed[l] = lines[l].0 != u;
                queue.push_back(v);
            }
        }
    }
    if let Some(b) = seen.iter().position(|s| !s) {
        return Err(TopologyError::Disconnected(b));
    }
    Ok(Topology {
        order,
        parent,
        parent_line,
        child_lines,
        reversed,
    })
}
