//! Which precondition conjuncts can interference falsify between two
//! consecutive ticks? The ones it cannot — the Unfalsify set — are exactly
//! the conjuncts a lock-based implementation may validate once and then
//! trust for the rest of its critical section.

use std::collections::BTreeSet;

use crate::dsl::{BlockSpec, BodyItem};
use crate::engine::{explore::replay, explore_states, ground_with_binding, GroundAtom, Trajectory};
use crate::heap::HeapState;
use crate::instance::Binding;
use crate::interference::{GuardMode, InterferenceModel, LockSet};

/// One fluent conjunct of a block precondition, ground under the binding.
#[derive(Debug)]
pub struct ConjunctVerdict {
    /// Symbolic form as written in the block, e.g. `suffix(y)`.
    pub literal: String,
    /// Ground form on δ, e.g. `suffix(t)`.
    pub ground: String,
    pub falsifiable: bool,
    /// Shortest interference trajectory whose final tick falsifies the
    /// conjunct; replayable from δ.
    pub witness: Option<Trajectory>,
}

#[derive(Debug)]
pub struct FalsifyReport {
    pub op: String,
    pub block: String,
    pub binding: Binding,
    pub horizon: usize,
    /// Fluent conjuncts in declaration order. Static atoms and comparisons
    /// are exempt: keys never change.
    pub verdicts: Vec<ConjunctVerdict>,
}

impl FalsifyReport {
    /// Symbolic literals interference cannot falsify within the horizon.
    pub fn unfalsify(&self) -> Vec<String> {
        self.verdicts
            .iter()
            .filter(|v| !v.falsifiable)
            .map(|v| v.literal.clone())
            .collect()
    }
}

pub(crate) struct Watched {
    pub literal: String,
    pub ground: GroundAtom,
    pub positive: bool,
}

/// The block's fluent precondition literals, ground under the binding.
/// Literals naming a fresh symbol (the definitional key atoms) are skipped
/// along with statics and comparisons.
pub(crate) fn watched_literals(
    model: &InterferenceModel,
    block: &BlockSpec,
    binding: &Binding,
) -> Vec<Watched> {
    let theory = model.theory();
    let mut out = Vec::new();
    for item in &block.pre {
        let (atom, positive) = match item {
            BodyItem::Pos(a) => (a, true),
            BodyItem::Neg(a) => (a, false),
            BodyItem::Cmp(_) => continue,
        };
        if !theory.is_fluent(&atom.pred) {
            continue;
        }
        match ground_with_binding(atom, binding) {
            Ok(ground) => out.push(Watched {
                literal: if positive {
                    atom.to_string()
                } else {
                    format!("not {atom}")
                },
                ground,
                positive,
            }),
            Err(_) => continue, // mentions a fresh symbol; nothing to watch
        }
    }
    out
}

/// Scan every interference transition reachable within the horizon for one
/// that flips a watched conjunct. Shared by the falsification task (empty
/// lock set) and the adequacy task (candidate lock set).
pub(crate) fn falsification_scan(
    model: &InterferenceModel,
    delta: &HeapState,
    block: &BlockSpec,
    binding: &Binding,
    horizon: usize,
    locks: &LockSet,
    guard: GuardMode,
) -> Vec<ConjunctVerdict> {
    let watched = watched_literals(model, block, binding);
    let graph = explore_states(delta, model, horizon, locks, guard);
    let mut verdicts: Vec<ConjunctVerdict> = watched
        .iter()
        .map(|w| ConjunctVerdict {
            literal: w.literal.clone(),
            ground: w.ground.render(delta),
            falsifiable: false,
            witness: None,
        })
        .collect();
    let mut open: BTreeSet<usize> = (0..watched.len()).collect();
    for (i, event, j) in &graph.transitions {
        if open.is_empty() {
            break;
        }
        let before = &graph.states[*i].derived;
        let after = &graph.states[*j].derived;
        let hits: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&idx| {
                let w = &watched[idx];
                if w.positive {
                    before.contains(&w.ground) && !after.contains(&w.ground)
                } else {
                    !before.contains(&w.ground) && after.contains(&w.ground)
                }
            })
            .collect();
        for idx in hits {
            let mut events = graph.events_to(*i);
            events.push(event.clone());
            verdicts[idx].falsifiable = true;
            verdicts[idx].witness = Some(replay(model, delta, &events));
            open.remove(&idx);
        }
    }
    verdicts
}

/// Falsification under unrestricted interference: no locks held.
pub fn task1_unfalsify(
    model: &InterferenceModel,
    op: &str,
    block: &BlockSpec,
    delta: &HeapState,
    binding: &Binding,
    horizon: usize,
) -> FalsifyReport {
    let verdicts = falsification_scan(
        model,
        delta,
        block,
        binding,
        horizon,
        &LockSet::new(),
        GuardMode::Protocol,
    );
    FalsifyReport {
        op: op.to_string(),
        block: block.name.clone(),
        binding: binding.clone(),
        horizon,
        verdicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin_bundle;
    use crate::instance::least_delta;
    use crate::interference::build_interference;

    fn run(bundle: &str, op: &str) -> FalsifyReport {
        let b = builtin_bundle(bundle).unwrap();
        let d = least_delta(&b, 4).unwrap();
        let model = build_interference(&b);
        let spec = b.knowledge.op(op).unwrap();
        let choice = &d.choices[op];
        let block = &spec.blocks[choice.block_index];
        let horizon = block.steps.len() + 2;
        task1_unfalsify(&model, op, block, &d.state, &choice.binding, horizon)
    }

    #[test]
    fn list_insert_only_suffix_survives() {
        let r = run("linked_list", "ins");
        assert_eq!(r.unfalsify(), vec!["suffix(y)"]);
        let reach = r.verdicts.iter().find(|v| v.literal == "reach(x)").unwrap();
        assert!(reach.falsifiable);
        let w = reach.witness.as_ref().unwrap();
        // The witness must actually flip the conjunct on its last tick.
        let second_last = &w.states[w.states.len() - 2];
        let last = w.last();
        let g = &ground_with_binding(
            &crate::dsl::Atom::new("reach", vec![crate::dsl::Term::Sym("x".into())]),
            &r.binding,
        )
        .unwrap();
        assert!(second_last.derived.contains(g));
        assert!(!last.derived.contains(g));
    }

    #[test]
    fn list_delete_keeps_reach_and_suffix() {
        let r = run("linked_list", "del");
        assert_eq!(r.unfalsify(), vec!["reach(x)", "suffix(z)"]);
    }

    #[test]
    fn external_insert_keeps_only_leaf() {
        let r = run("external_bst", "ins");
        assert_eq!(r.unfalsify(), vec!["leaf(l)"]);
        assert!(r.verdicts.iter().any(|v| v.literal == "reach(u)" && v.falsifiable));
    }

    #[test]
    fn external_delete_keeps_anchor_and_victim_leafhood() {
        let r = run("external_bst", "del");
        // reach(g) grounds to the head sentinel (a fact), and nothing ever
        // writes into a leaf's child slots, so leaf(l) survives too; the
        // three routing edges are all falsifiable.
        assert_eq!(r.unfalsify(), vec!["reach(g)", "leaf(l)"]);
        assert_eq!(r.verdicts.iter().filter(|v| v.falsifiable).count(), 3);
    }

    #[test]
    fn internal_insert_keeps_reach_of_head_window() {
        let r = run("internal_bst", "ins");
        assert_eq!(r.unfalsify(), vec!["reach(u)"]);
    }

    #[test]
    fn internal_delete_keeps_four_conjuncts() {
        let r = run("internal_bst", "del");
        assert_eq!(
            r.unfalsify(),
            vec!["reach(p)", "edge(p,t,left)", "edge(y,a,left)", "edge(y,r,right)"]
        );
    }
}
