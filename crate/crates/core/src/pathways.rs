//! Infection forest: a disjoint-set forest over the population that groups
//! infected and suspected users into outbreak clusters.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::UserId;
use crate::trace::{ChiEdge, TraceEntry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Free,
    Infected,
    Suspected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestEdge {
    pub from: UserId,
    pub to: UserId,
    /// Whether the edge joined two trees (false if it closed a cycle).
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Cluster {
    pub root: UserId,
    pub size: usize,
    pub infected_members: Vec<UserId>,
    pub suspected_members: Vec<UserId>,
    pub edges: Vec<ChiEdge>,
}

impl Cluster {
    pub fn members(&self) -> Vec<UserId> {
        let mut m: Vec<_> = self
            .infected_members
            .iter()
            .chain(&self.suspected_members)
            .copied()
            .collect();
        m.sort_unstable();
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionForest {
    parent: Vec<u32>,
    rank: Vec<u8>,
    status: Vec<Status>,
    edges: Vec<ForestEdge>,
}

impl InfectionForest {
    /// `users` single-node trees, all free.
    pub fn new(users: u32) -> Self {
        InfectionForest {
            parent: (0..users).collect(),
            rank: vec![0; users as usize],
            status: vec![Status::Free; users as usize],
            edges: Vec::new(),
        }
    }

    pub fn users(&self) -> u32 {
        self.parent.len() as u32
    }

    fn check(&self, p: UserId) -> Result<usize, ForestError> {
        if (p.0 as usize) < self.parent.len() {
            Ok(p.0 as usize)
        } else {
            Err(ForestError::UnknownUser(p))
        }
    }

    /// Cluster representative of `p`, compressing the path to it.
    pub fn find(&mut self, p: UserId) -> Result<UserId, ForestError> {
        let start = self.check(p)?;
        let mut root = start;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = start;
        while cur != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        Ok(UserId(root as u32))
    }

    /// Number of parent links from `p` to its root, without compressing.
    pub fn depth(&self, p: UserId) -> Result<u32, ForestError> {
        let mut cur = self.check(p)?;
        let mut d = 0;
        while self.parent[cur] as usize != cur {
            cur = self.parent[cur] as usize;
            d += 1;
        }
        Ok(d)
    }

    /// Joins the trees of `a` and `b` by rank; on equal ranks `a`'s root
    /// becomes the parent. Returns false if they were already joined.
    pub fn union(&mut self, a: UserId, b: UserId) -> Result<bool, ForestError> {
        let ra = self.find(a)?.0 as usize;
        let rb = self.find(b)?.0 as usize;
        if ra == rb {
            return Ok(false);
        }
        let (hi, lo) = if self.rank[rb] > self.rank[ra] {
            (rb, ra)
        } else {
            (ra, rb)
        };
        self.parent[lo] = hi as u32;
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        Ok(true)
    }

    pub fn status(&self, p: UserId) -> Result<Status, ForestError> {
        Ok(self.status[self.check(p)?])
    }

    pub fn edges(&self) -> &[ForestEdge] {
        &self.edges
    }

    /// Records `chi` and joins the endpoints of every edge that does not
    /// close a cycle; then marks `infected` and `gamma` users.
    pub fn build_disjoint_set(
        &mut self,
        chi: &[ChiEdge],
        infected: &[UserId],
        gamma: &[TraceEntry],
    ) -> Result<(), ForestError> {
        for p in infected.iter().chain(gamma.iter().map(|e| &e.user)) {
            self.check(*p)?;
        }
        for e in chi {
            self.check(e.from)?;
            self.check(e.to)?;
        }
        for e in chi {
            let accepted = self.union(e.from, e.to)?;
            self.edges.push(ForestEdge {
                from: e.from,
                to: e.to,
                accepted,
            });
        }
        self.status.fill(Status::Free);
        for e in gamma {
            self.status[e.user.0 as usize] = Status::Suspected;
        }
        for p in infected {
            self.status[p.0 as usize] = Status::Infected;
        }
        Ok(())
    }

    /// Clusters containing at least one infected or suspected user, largest
    /// first (ties by root).
    pub fn clusters(&mut self) -> Vec<Cluster> {
        let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for p in 0..self.users() {
            let root = self.find(UserId(p)).expect("in range").0;
            groups.entry(root).or_default().push(p);
        }
        let mut out = Vec::new();
        for (root, members) in groups {
            if members.iter().all(|&m| self.status[m as usize] == Status::Free) {
                continue;
            }
            let pick = |s: Status| -> Vec<UserId> {
                members
                    .iter()
                    .filter(|&&m| self.status[m as usize] == s)
                    .map(|&m| UserId(m))
                    .collect()
            };
            let infected_members = pick(Status::Infected);
            let suspected_members = pick(Status::Suspected);
            let edges = self.tree_edges(&members);
            out.push(Cluster {
                root: UserId(root),
                size: members.len(),
                infected_members,
                suspected_members,
                edges,
            });
        }
        out.sort_by(|a, b| b.size.cmp(&a.size).then(a.root.cmp(&b.root)));
        out
    }

    /// Accepted edges of the cluster represented by `root`, ordered
    /// breadth-first from its infected members.
    pub fn infection_tree(&mut self, root: UserId) -> Result<Vec<ChiEdge>, ForestError> {
        let r = self.find(root)?;
        let mut members = Vec::new();
        for p in 0..self.users() {
            if self.find(UserId(p))? == r {
                members.push(p);
            }
        }
        Ok(self.tree_edges(&members))
    }

    fn tree_edges(&self, members: &[u32]) -> Vec<ChiEdge> {
        let inside: HashSet<u32> = members.iter().copied().collect();
        let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut has_parent = HashSet::new();
        for e in self.edges.iter().filter(|e| e.accepted && inside.contains(&e.from.0)) {
            children.entry(e.from.0).or_default().push(e.to.0);
            has_parent.insert(e.to.0);
        }
        // roots of the tree(s): infected members first, then any parentless node
        let mut starts: Vec<u32> = members
            .iter()
            .copied()
            .filter(|&m| self.status[m as usize] == Status::Infected)
            .collect();
        starts.extend(members.iter().copied().filter(|m| !has_parent.contains(m)));
        let mut out = Vec::new();
        let mut visited = HashSet::new();
        for s in starts {
            if !visited.insert(s) {
                continue;
            }
            let mut queue = VecDeque::from([s]);
            while let Some(p) = queue.pop_front() {
                for &c in children.get(&p).into_iter().flatten() {
                    if visited.insert(c) {
                        out.push(ChiEdge {
                            from: UserId(p),
                            to: UserId(c),
                        });
                        queue.push_back(c);
                    }
                }
            }
        }
        out
    }

    /// Serializable form: the edge list and statuses; the forest itself is
    /// rebuilt by replaying the edges.
    pub fn state(&self) -> ForestState {
        ForestState {
            users: self.users(),
            edges: self.edges.clone(),
            infected: self.with_status(Status::Infected),
            suspected: self.with_status(Status::Suspected),
        }
    }

    fn with_status(&self, s: Status) -> Vec<UserId> {
        (0..self.users())
            .filter(|&p| self.status[p as usize] == s)
            .map(UserId)
            .collect()
    }

    pub fn from_state(state: &ForestState) -> Result<Self, ForestError> {
        let mut f = InfectionForest::new(state.users);
        for e in &state.edges {
            let joined = f.union(e.from, e.to)?;
            f.edges.push(ForestEdge { accepted: joined, ..*e });
        }
        for &p in &state.suspected {
            let i = f.check(p)?;
            f.status[i] = Status::Suspected;
        }
        for &p in &state.infected {
            let i = f.check(p)?;
            f.status[i] = Status::Infected;
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestState {
    pub users: u32,
    pub edges: Vec<ForestEdge>,
    pub infected: Vec<UserId>,
    pub suspected: Vec<UserId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::ten_users_until;
    use crate::trace::{trace_contacts, TraceResult};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn edge(a: u32, b: u32) -> ChiEdge {
        ChiEdge {
            from: UserId(a),
            to: UserId(b),
        }
    }

    fn ten_user_forest() -> InfectionForest {
        let g = ten_users_until(5);
        let r = trace_contacts(&g, &[UserId(2), UserId(6)], &TraceResult::default(), 3).unwrap();
        let mut f = InfectionForest::new(10);
        f.build_disjoint_set(&r.chi, &r.infected, &r.gamma).unwrap();
        f
    }

    fn ids(v: &[u32]) -> Vec<UserId> {
        v.iter().map(|&u| UserId(u)).collect()
    }

    #[test]
    fn ten_user_clusters() {
        let mut f = ten_user_forest();
        let c = f.clusters();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members(), ids(&[0, 2, 3, 5, 7, 8]));
        assert_eq!(c[1].members(), ids(&[1, 4, 6, 9]));
        assert_eq!(f.find(UserId(3)).unwrap(), f.find(UserId(2)).unwrap());
        assert_ne!(f.find(UserId(9)).unwrap(), f.find(UserId(0)).unwrap());
        let tree: HashSet<_> = f.infection_tree(UserId(5)).unwrap().into_iter().collect();
        let want: HashSet<_> = [edge(2, 8), edge(2, 7), edge(2, 0), edge(0, 5), edge(5, 3)].into();
        assert_eq!(tree, want);
        // breadth-first from the infected member
        assert_eq!(f.infection_tree(UserId(2)).unwrap()[0].from, UserId(2));
        assert_eq!(c[0].infected_members, ids(&[2]));
        assert_eq!(c[1].edges.len(), 3);
    }

    #[test]
    fn empty_and_singletons() {
        let mut f = InfectionForest::new(5);
        f.build_disjoint_set(&[], &[], &[]).unwrap();
        assert!(f.clusters().is_empty());
        assert_eq!(f.find(UserId(3)).unwrap(), UserId(3));
        assert_eq!(f.status(UserId(3)).unwrap(), Status::Free);
        f.build_disjoint_set(&[], &[UserId(1)], &[]).unwrap();
        let c = f.clusters();
        assert_eq!((c.len(), c[0].size), (1, 1));
        assert!(f.infection_tree(UserId(1)).unwrap().is_empty());
        assert_eq!(f.find(UserId(5)), Err(ForestError::UnknownUser(UserId(5))));
        assert!(f.build_disjoint_set(&[edge(0, 9)], &[], &[]).is_err());
    }

    #[test]
    fn duplicate_edge_is_stored_but_not_joined() {
        let mut f = InfectionForest::new(4);
        f.build_disjoint_set(&[edge(0, 1), edge(0, 1), edge(1, 2)], &[UserId(0)], &[])
            .unwrap();
        let accepted: Vec<bool> = f.edges().iter().map(|e| e.accepted).collect();
        assert_eq!(accepted, vec![true, false, true]);
    }

    #[test]
    fn rank_tie_goes_to_first_argument() {
        let mut f = InfectionForest::new(4);
        f.union(UserId(2), UserId(3)).unwrap();
        assert_eq!(f.find(UserId(3)).unwrap(), UserId(2));
        f.union(UserId(1), UserId(0)).unwrap();
        f.union(UserId(0), UserId(3)).unwrap();
        assert_eq!(f.find(UserId(2)).unwrap(), UserId(1));
    }

    #[test]
    fn state_round_trip() {
        let f = ten_user_forest();
        let mut back = InfectionForest::from_state(&f.state()).unwrap();
        let mut orig = f.clone();
        assert_eq!(back.clusters(), orig.clusters());
    }

    proptest! {
        #[test]
        fn clusters_partition_marked_users(
            parents in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 1..30),
            lone in proptest::collection::vec(0usize..30, 0..3),
        ) {
            // a random forest: node i hangs under some earlier node or is a root
            let users = parents.len() as u32;
            let mut chi = Vec::new();
            for (i, p) in parents.iter().enumerate().skip(1) {
                if let Some(x) = p {
                    chi.push(edge((x * i as f64) as u32, i as u32));
                }
            }
            let has_parent: HashSet<u32> = chi.iter().map(|e| e.to.0).collect();
            let in_edge: HashSet<u32> = chi.iter().flat_map(|e| [e.from.0, e.to.0]).collect();
            let mut infected: Vec<UserId> = (0..users)
                .filter(|u| in_edge.contains(u) && !has_parent.contains(u))
                .map(UserId)
                .collect();
            infected.extend(lone.iter().map(|&l| UserId(l as u32 % users)).filter(|u| !in_edge.contains(&u.0)));
            let gamma: Vec<TraceEntry> = chi
                .iter()
                .map(|e| TraceEntry { user: e.to, level: 1, via: e.from, source: e.from })
                .collect();
            let mut f = InfectionForest::new(users);
            f.build_disjoint_set(&chi, &infected, &gamma).unwrap();
            let clusters = f.clusters();
            let mut seen = HashSet::new();
            for c in &clusters {
                for m in c.members() {
                    prop_assert!(seen.insert(m), "member in two clusters");
                }
                prop_assert_eq!(c.size, c.members().len());
                // one infected source per tree here
                prop_assert_eq!(c.infected_members.len(), 1);
                prop_assert_eq!(c.edges.len() + 1, c.size);
            }
            let want: HashSet<UserId> = infected.iter().copied().chain(gamma.iter().map(|e| e.user)).collect();
            prop_assert_eq!(seen, want);
            let accepted = f.edges().iter().filter(|e| e.accepted).count();
            prop_assert_eq!(accepted, chi.len());
            for p in 0..users {
                let r = f.find(UserId(p)).unwrap();
                prop_assert_eq!(f.find(r).unwrap(), r);
            }
        }
    }

    #[test]
    fn random_unions_stay_shallow() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let users = 10_000;
        let mut f = InfectionForest::new(users);
        for _ in 0..50_000 {
            let a = UserId(rng.gen_range(0..users));
            let b = UserId(rng.gen_range(0..users));
            if rng.gen_bool(0.5) {
                f.union(a, b).unwrap();
            } else {
                f.find(a).unwrap();
            }
        }
        let max = (0..users).map(|p| f.depth(UserId(p)).unwrap()).max().unwrap();
        assert!(max <= 5, "depth {max}");
    }
}
