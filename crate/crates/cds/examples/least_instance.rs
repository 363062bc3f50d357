//! Every analysis in this crate runs on the least instance: the smallest
//! concrete heap on which every declared operation has a window to fire.
//! This example computes it for each built-in structure, shows the facts
//! and the per-operation bindings, and demonstrates why the depth bound
//! matters: a delete needs something to delete, so depth 0 fails.

use cds::dsl::builtin_bundle;
use cds::instance::least_delta;

fn main() {
    for name in ["linked_list", "external_bst", "internal_bst"] {
        let bundle = builtin_bundle(name).expect("builtin parses");
        let delta = least_delta(&bundle, 4).expect("an instance exists within depth 4");
        println!("== {name} ==");
        for fact in delta.state.facts() {
            println!("  {fact}");
        }
        for (op, choice) in &delta.choices {
            let block = &bundle.knowledge.op(op).expect("known op").blocks[choice.block_index];
            println!(
                "  {op} fires as {} at {}",
                block.name,
                choice.binding.render(&delta.state)
            );
        }
        println!();
    }

    // Nothing to delete on a sentinel-only heap: the search reports which
    // operation it could not place.
    let bundle = builtin_bundle("linked_list").expect("builtin parses");
    let err = least_delta(&bundle, 0).expect_err("depth 0 cannot host a delete");
    println!("depth 0: {err}");
}
