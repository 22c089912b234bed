//! Shared block tree plus each node's head and validity verdicts.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMeta {
    pub parent: Option<usize>,
    pub height: u64,
    /// `None` for genesis.
    pub miner: Option<usize>,
    pub timestamp: f64,
    pub valid: bool,
    pub total_fee: f64,
    pub gas_used: u64,
    pub tx_count: usize,
    pub sequential_time: f64,
    /// Verification time for each cost class (one per processor count in use).
    pub costs: Vec<f64>,
}

impl BlockMeta {
    pub fn genesis(classes: usize) -> Self {
        Self {
            parent: None,
            height: 0,
            miner: None,
            timestamp: 0.0,
            valid: true,
            total_fee: 0.0,
            gas_used: 0,
            tx_count: 0,
            sequential_time: 0.0,
            costs: vec![0.0; classes],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRole {
    pub verifies: bool,
    pub produces_invalid: bool,
    pub cost_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Unknown,
    Valid,
    Invalid,
}

#[derive(Debug, Clone)]
struct NodeState {
    role: NodeRole,
    head: usize,
    verdicts: Vec<Verdict>,
}

impl NodeState {
    fn verdict(&self, block: usize) -> Verdict {
        self.verdicts.get(block).copied().unwrap_or(Verdict::Unknown)
    }

    fn set(&mut self, block: usize, v: Verdict) {
        if self.verdicts.len() <= block {
            self.verdicts.resize(block + 1, Verdict::Unknown);
        }
        self.verdicts[block] = v;
    }
}

#[derive(Debug, Clone)]
pub struct ChainView {
    blocks: Vec<BlockMeta>,
    /// Block is invalid or descends from an invalid block.
    tainted: Vec<bool>,
    nodes: Vec<NodeState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub adopted: bool,
    pub head: usize,
    /// Verification time spent reaching the decision.
    pub cost: f64,
}

impl ChainView {
    pub fn new(roles: &[NodeRole], classes: usize) -> Self {
        let nodes = roles
            .iter()
            .map(|&role| NodeState {
                role,
                head: 0,
                verdicts: vec![Verdict::Valid],
            })
            .collect();
        Self {
            blocks: vec![BlockMeta::genesis(classes)],
            tainted: vec![false],
            nodes,
        }
    }

    pub fn blocks(&self) -> &[BlockMeta] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> &BlockMeta {
        &self.blocks[id]
    }

    pub fn head(&self, node: usize) -> usize {
        self.nodes[node].head
    }

    pub fn role(&self, node: usize) -> NodeRole {
        self.nodes[node].role
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn verdict(&self, node: usize, block: usize) -> Verdict {
        self.nodes[node].verdict(block)
    }

    pub fn is_tainted(&self, block: usize) -> bool {
        self.tainted[block]
    }

    pub fn push_block(&mut self, meta: BlockMeta) -> Result<usize> {
        let id = self.blocks.len();
        let parent = meta
            .parent
            .ok_or_else(|| Error::param("only genesis may lack a parent"))?;
        let Some(p) = self.blocks.get(parent) else {
            return Err(Error::UnknownParent { block: id, parent });
        };
        if meta.height != p.height + 1 {
            return Err(Error::param(format!(
                "block {id} has height {} but its parent has height {}",
                meta.height, p.height
            )));
        }
        self.tainted.push(!meta.valid || self.tainted[parent]);
        self.blocks.push(meta);
        Ok(id)
    }

    /// A node's own freshly mined block. Honest nodes extend their head with
    /// it; the invalid producer knows its blocks are bad and stays put.
    pub fn record_own(&mut self, node: usize, block: usize) {
        let state = &mut self.nodes[node];
        if state.role.produces_invalid {
            state.set(block, Verdict::Invalid);
        } else {
            state.set(block, Verdict::Valid);
            state.head = block;
        }
    }

    /// Tip of the longest chain whose blocks are all valid, lowest id on ties.
    pub fn canonical_tip(&self) -> usize {
        let mut best = 0;
        for (id, b) in self.blocks.iter().enumerate() {
            if !self.tainted[id] && b.height > self.blocks[best].height {
                best = id;
            }
        }
        best
    }

    /// Canonical chain from genesis (excluded) to the tip.
    pub fn canonical_chain(&self) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut id = self.canonical_tip();
        while let Some(parent) = self.blocks[id].parent {
            chain.push(id);
            id = parent;
        }
        chain.reverse();
        chain
    }
}

/// Delivers `candidate` to `node`.
///
/// A verifier executes every block between the candidate and the nearest
/// ancestor it has already judged, oldest first, stopping at the first
/// invalid one; descendants of a block it knows to be invalid are dropped
/// without execution. It adopts a fully valid candidate that is strictly
/// higher than its head. A non-verifier adopts any strictly higher candidate.
pub fn fork_choice(view: &mut ChainView, node: usize, candidate: usize) -> Result<Decision> {
    if candidate >= view.blocks.len() {
        return Err(Error::param(format!("unknown block {candidate}")));
    }
    let height = view.blocks[candidate].height;
    let state = &view.nodes[node];
    let higher = height > view.blocks[state.head].height;

    if !state.role.verifies {
        let state = &mut view.nodes[node];
        if higher {
            state.head = candidate;
        }
        return Ok(Decision {
            adopted: higher,
            head: state.head,
            cost: 0.0,
        });
    }

    let mut pending = Vec::new();
    let mut id = candidate;
    let base = loop {
        match state.verdict(id) {
            Verdict::Unknown => {
                pending.push(id);
                id = view.blocks[id]
                    .parent
                    .ok_or(Error::UnknownParent { block: id, parent: id })?;
            }
            known => break known,
        }
    };

    let class = state.role.cost_class;
    let mut cost = 0.0;
    let mut ok = base == Verdict::Valid;
    let state = &mut view.nodes[node];
    for &b in pending.iter().rev() {
        if ok {
            let meta = &view.blocks[b];
            cost += meta.costs[class];
            ok = meta.valid;
        }
        state.set(b, if ok { Verdict::Valid } else { Verdict::Invalid });
    }
    let adopted = ok && higher;
    if adopted {
        state.head = candidate;
    }
    Ok(Decision {
        adopted,
        head: state.head,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const VERIFIER: NodeRole = NodeRole {
        verifies: true,
        produces_invalid: false,
        cost_class: 0,
    };
    const SKIPPER: NodeRole = NodeRole {
        verifies: false,
        produces_invalid: false,
        cost_class: 0,
    };

    fn child(view: &ChainView, parent: usize, valid: bool, cost: f64) -> BlockMeta {
        BlockMeta {
            parent: Some(parent),
            height: view.block(parent).height + 1,
            miner: Some(9),
            valid,
            costs: vec![cost],
            ..BlockMeta::genesis(1)
        }
    }

    #[test]
    fn verifier_rejects_invalid_extension() {
        let mut v = ChainView::new(&[VERIFIER, SKIPPER], 1);
        let bad = v.push_block(child(&v, 0, false, 0.5)).unwrap();
        let d = fork_choice(&mut v, 0, bad).unwrap();
        assert!(!d.adopted);
        assert_eq!((d.head, d.cost), (0, 0.5));
        assert_eq!(v.verdict(0, bad), Verdict::Invalid);

        let d = fork_choice(&mut v, 1, bad).unwrap();
        assert!(d.adopted);
        assert_eq!((d.head, d.cost), (bad, 0.0));

        // descendants of a known-invalid block are dropped for free
        let next = v.push_block(child(&v, bad, true, 0.7)).unwrap();
        let d = fork_choice(&mut v, 0, next).unwrap();
        assert_eq!((d.adopted, d.head, d.cost), (false, 0, 0.0));
        assert!(v.is_tainted(next));
    }

    #[test]
    fn ties_keep_the_incumbent() {
        let mut v = ChainView::new(&[VERIFIER], 1);
        let a = v.push_block(child(&v, 0, true, 0.1)).unwrap();
        let b = v.push_block(child(&v, 0, true, 0.2)).unwrap();
        assert!(fork_choice(&mut v, 0, a).unwrap().adopted);
        let d = fork_choice(&mut v, 0, b).unwrap();
        assert_eq!((d.adopted, d.head), (false, a));
        assert_eq!(d.cost, 0.2);
        assert_eq!(v.canonical_tip(), a);
    }

    #[test]
    fn unverified_ancestors_are_paid_for_once() {
        let mut v = ChainView::new(&[VERIFIER], 1);
        let a = v.push_block(child(&v, 0, true, 1.0)).unwrap();
        let b = v.push_block(child(&v, a, true, 2.0)).unwrap();
        let d = fork_choice(&mut v, 0, b).unwrap();
        assert_eq!((d.adopted, d.head, d.cost), (true, b, 3.0));
        let c = v.push_block(child(&v, b, true, 4.0)).unwrap();
        assert_eq!(fork_choice(&mut v, 0, c).unwrap().cost, 4.0);
        assert_eq!(fork_choice(&mut v, 0, a).unwrap().cost, 0.0);
    }

    #[test]
    fn canonical_chain_skips_tainted_branches() {
        let mut v = ChainView::new(&[SKIPPER], 1);
        let a = v.push_block(child(&v, 0, true, 0.0)).unwrap();
        let bad = v.push_block(child(&v, a, false, 0.0)).unwrap();
        let c = v.push_block(child(&v, bad, true, 0.0)).unwrap();
        let _d = v.push_block(child(&v, c, true, 0.0)).unwrap();
        let e = v.push_block(child(&v, a, true, 0.0)).unwrap();
        assert_eq!(v.canonical_chain(), vec![a, e]);
        assert!(v.canonical_chain().iter().all(|&b| !v.is_tainted(b)));
    }

    #[test]
    fn invalid_producer_never_adopts_its_own_blocks() {
        let producer = NodeRole {
            produces_invalid: true,
            ..VERIFIER
        };
        let mut v = ChainView::new(&[producer], 1);
        let bad = v.push_block(child(&v, 0, false, 0.0)).unwrap();
        v.record_own(0, bad);
        assert_eq!(v.head(0), 0);
        let on_top = v.push_block(child(&v, bad, true, 1.0)).unwrap();
        assert_eq!(fork_choice(&mut v, 0, on_top).unwrap().cost, 0.0);
    }

    #[test]
    fn unknown_parent_is_an_error() {
        let mut v = ChainView::new(&[VERIFIER], 1);
        let meta = BlockMeta {
            parent: Some(7),
            height: 1,
            ..BlockMeta::genesis(1)
        };
        assert!(matches!(
            v.push_block(meta),
            Err(Error::UnknownParent { block: 1, parent: 7 })
        ));
    }
}
