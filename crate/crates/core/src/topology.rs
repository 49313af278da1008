//! Directed "listens-to" graphs.
//!
//! Edges are stored listener → sources, so `sources(k)` answers "whom does
//! agent k hear" in O(in-degree).

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("topology needs at least {min} agents (got {got})")]
    TooSmall { min: usize, got: usize },
    #[error("edge {listener}->{heard}: unknown agent id {id}")]
    UnknownAgent {
        listener: usize,
        heard: usize,
        id: usize,
    },
    #[error("edge {0}->{0}: self-edge")]
    SelfEdge(usize),
    #[error("unknown agent id {0}")]
    NoSuchAgent(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Topology {
    listens_to: Vec<BTreeSet<usize>>,
}

impl Topology {
    /// `n` agents and no edges.
    pub fn isolated(n: usize) -> Self {
        Self {
            listens_to: vec![BTreeSet::new(); n],
        }
    }

    /// Agent 0 is the pacemaker; agent k hears only k-1.
    pub fn chain(n: usize) -> Result<Self, TopologyError> {
        require(n, 2)?;
        let mut t = Self::isolated(n);
        for k in 1..n {
            t.listens_to[k].insert(k - 1);
        }
        Ok(t)
    }

    /// Agent k hears (k-1) mod n.
    pub fn ring(n: usize) -> Result<Self, TopologyError> {
        require(n, 2)?;
        let mut t = Self::isolated(n);
        for k in 0..n {
            t.listens_to[k].insert((k + n - 1) % n);
        }
        Ok(t)
    }

    /// Every agent k >= 1 hears agent 0.
    pub fn star(n: usize) -> Result<Self, TopologyError> {
        require(n, 1)?;
        let mut t = Self::isolated(n);
        for k in 1..n {
            t.listens_to[k].insert(0);
        }
        Ok(t)
    }

    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        require(n, 1)?;
        let mut t = Self::isolated(n);
        for k in 0..n {
            t.listens_to[k] = (0..n).filter(|&j| j != k).collect();
        }
        Ok(t)
    }

    /// Exactly the given `[listener, source]` edges.
    pub fn from_edge_list(n: usize, edges: &[[usize; 2]]) -> Result<Self, TopologyError> {
        require(n, 1)?;
        let mut t = Self::isolated(n);
        for &[listener, source] in edges {
            t.set_edge(listener, source, true)?;
        }
        Ok(t)
    }

    pub fn n_agents(&self) -> usize {
        self.listens_to.len()
    }

    /// Agents that `listener` hears.
    pub fn sources(&self, listener: usize) -> &BTreeSet<usize> {
        &self.listens_to[listener]
    }

    pub fn hears(&self, listener: usize, source: usize) -> bool {
        self.listens_to
            .get(listener)
            .is_some_and(|s| s.contains(&source))
    }

    /// Reverse adjacency: for each source, the agents listening to it.
    pub fn listeners(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_agents()];
        for (listener, sources) in self.listens_to.iter().enumerate() {
            for &s in sources {
                out[s].push(listener);
            }
        }
        out
    }

    /// Sorted `[listener, source]` pairs.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        self.listens_to
            .iter()
            .enumerate()
            .flat_map(|(l, s)| s.iter().map(move |&src| [l, src]))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.listens_to.iter().map(BTreeSet::len).sum()
    }

    pub fn in_degree(&self, agent: usize) -> usize {
        self.listens_to[agent].len()
    }

    pub fn out_degree(&self, agent: usize) -> usize {
        self.listens_to
            .iter()
            .filter(|s| s.contains(&agent))
            .count()
    }

    pub fn set_edge(
        &mut self,
        listener: usize,
        source: usize,
        on: bool,
    ) -> Result<(), TopologyError> {
        let n = self.n_agents();
        for id in [listener, source] {
            if id >= n {
                return Err(TopologyError::UnknownAgent {
                    listener,
                    heard: source,
                    id,
                });
            }
        }
        if listener == source {
            return Err(TopologyError::SelfEdge(listener));
        }
        if on {
            self.listens_to[listener].insert(source);
        } else {
            self.listens_to[listener].remove(&source);
        }
        Ok(())
    }

    /// Appends an unconnected agent and returns its id.
    pub fn add_agent(&mut self) -> usize {
        self.listens_to.push(BTreeSet::new());
        self.listens_to.len() - 1
    }

    /// Removes `agent` and its edges; higher ids shift down by one.
    pub fn remove_agent(&mut self, agent: usize) -> Result<(), TopologyError> {
        if agent >= self.n_agents() {
            return Err(TopologyError::NoSuchAgent(agent));
        }
        if self.n_agents() == 1 {
            return Err(TopologyError::TooSmall { min: 1, got: 0 });
        }
        self.listens_to.remove(agent);
        for sources in &mut self.listens_to {
            *sources = sources
                .iter()
                .filter(|&&s| s != agent)
                .map(|&s| if s > agent { s - 1 } else { s })
                .collect();
        }
        Ok(())
    }
}

fn require(n: usize, min: usize) -> Result<(), TopologyError> {
    if n < min {
        Err(TopologyError::TooSmall { min, got: n })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sets(t: &Topology) -> Vec<Vec<usize>> {
        (0..t.n_agents())
            .map(|k| t.sources(k).iter().copied().collect())
            .collect()
    }

    #[test]
    fn chain_shapes() {
        assert_eq!(
            sets(&Topology::chain(3).unwrap()),
            vec![vec![], vec![0], vec![1]]
        );
        assert_eq!(sets(&Topology::chain(2).unwrap()), vec![vec![], vec![0]]);
        let eight = Topology::chain(8).unwrap();
        assert_eq!(eight.edge_count(), 7);
        assert!(eight.sources(0).is_empty());
        assert!(matches!(
            Topology::chain(1),
            Err(TopologyError::TooSmall { .. })
        ));
    }

    #[test]
    fn ring_is_a_permutation_graph() {
        let r = Topology::ring(8).unwrap();
        assert_eq!(r.edge_count(), 8);
        assert!(r.hears(1, 0) && r.hears(0, 7));
        for k in 0..8 {
            assert_eq!(r.in_degree(k), 1);
            assert_eq!(r.out_degree(k), 1);
        }
        assert_eq!(sets(&Topology::ring(2).unwrap()), vec![vec![1], vec![0]]);
        assert!(Topology::ring(1).is_err());
    }

    #[test]
    fn star_and_complete() {
        assert_eq!(
            sets(&Topology::star(4).unwrap()),
            vec![vec![], vec![0], vec![0], vec![0]]
        );
        assert_eq!(Topology::complete(3).unwrap().edge_count(), 6);
        assert_eq!(Topology::complete(1).unwrap().edge_count(), 0);
    }

    #[test]
    fn edge_list_rejects_bad_edges() {
        assert_eq!(
            Topology::from_edge_list(2, &[[0, 0]]),
            Err(TopologyError::SelfEdge(0))
        );
        assert!(matches!(
            Topology::from_edge_list(8, &[[2, 9]]),
            Err(TopologyError::UnknownAgent { id: 9, .. })
        ));
    }

    #[test]
    fn remove_agent_renumbers() {
        let mut t = Topology::chain(4).unwrap();
        t.remove_agent(1).unwrap();
        // 2 heard 1 (gone); 3 heard 2, now 2 hears 1.
        assert_eq!(sets(&t), vec![vec![], vec![], vec![1]]);
    }

    fn arb_topology() -> impl Strategy<Value = Topology> {
        (1usize..10).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..30).prop_map(move |pairs| {
                let edges: Vec<[usize; 2]> = pairs
                    .into_iter()
                    .filter(|(a, b)| a != b)
                    .map(|(a, b)| [a, b])
                    .collect();
                Topology::from_edge_list(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(t in arb_topology()) {
            let back = Topology::from_edge_list(t.n_agents(), &t.edges()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn constructors_pass_validation(n in 2usize..20) {
            use crate::model::{validate_config, AgentParams, SimConfig};
            let agents: Vec<_> = (0..n).map(AgentParams::with_id).collect();
            for t in [
                Topology::chain(n).unwrap(),
                Topology::ring(n).unwrap(),
                Topology::star(n).unwrap(),
                Topology::complete(n).unwrap(),
            ] {
                prop_assert!(validate_config(&agents, &t.edges(), &SimConfig::default()).is_ok());
            }
        }
    }
}
