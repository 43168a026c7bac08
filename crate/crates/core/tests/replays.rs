//! Figure walk-throughs replayed step by step.

mod suites;

use suites::replays;

#[test]
fn merge_absorb_split_walkthrough() {
    replays::merge_absorb_split_walkthrough();
}

#[test]
fn two_node_split_keeps_level() {
    replays::two_node_split_keeps_level();
}

#[test]
fn held_test_becomes_internal() {
    replays::held_test_becomes_internal();
}

#[test]
fn lower_level_test_is_safe() {
    replays::lower_level_test_is_safe();
}

#[test]
fn next_hops_follow_the_tree() {
    replays::next_hops_follow_the_tree();
}

#[test]
fn perfect_links_shrink_fragment_count_each_tick() {
    replays::perfect_links_shrink_fragment_count_each_tick();
}

#[test]
fn non_greedy_triangle_is_stable() {
    replays::non_greedy_triangle_is_stable();
}

#[test]
fn greedy_triangle_keeps_moving() {
    replays::greedy_triangle_keeps_moving();
}
