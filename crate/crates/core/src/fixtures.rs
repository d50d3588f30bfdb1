//! Small reference taxonomies and a random DAG generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use crate::taxonomy::Taxonomy;

/// Twelve-node dish hierarchy with seven leaves and depth 3.
///
/// Leaf column order: omelette, pancakes, Greek salad, Caesar salad,
/// cheese sandwich, ham sandwich, tuna sandwich.
pub fn dish() -> Taxonomy {
    Taxonomy::new(
        &[
            "dish",
            "breakfast",
            "lunch",
            "omelette",
            "pancakes",
            "salad",
            "sandwich",
            "Greek salad",
            "Caesar salad",
            "cheese sandwich",
            "ham sandwich",
            "tuna sandwich",
        ],
        &[
            ("dish", "breakfast"),
            ("dish", "lunch"),
            ("breakfast", "omelette"),
            ("breakfast", "pancakes"),
            ("lunch", "salad"),
            ("lunch", "sandwich"),
            ("salad", "Greek salad"),
            ("salad", "Caesar salad"),
            ("sandwich", "cheese sandwich"),
            ("sandwich", "ham sandwich"),
            ("sandwich", "tuna sandwich"),
        ],
    )
    .expect("dish fixture is valid")
}

/// `root -> {A, B}`, `A -> {x, y}`, `B -> {y, z}`: leaf `y` has two parents.
pub fn diamond() -> Taxonomy {
    Taxonomy::new(
        &["root", "A", "B", "x", "y", "z"],
        &[
            ("root", "A"),
            ("root", "B"),
            ("A", "x"),
            ("A", "y"),
            ("B", "y"),
            ("B", "z"),
        ],
    )
    .expect("diamond fixture is valid")
}

/// Perfect binary tree with `2^depth` leaves, nodes in breadth-first order.
pub fn perfect_binary_tree(depth: u32) -> Taxonomy {
    let n = (1usize << (depth + 1)) - 1;
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let edges: Vec<(String, String)> = (1..n)
        .map(|i| (names[(i - 1) / 2].clone(), names[i].clone()))
        .collect();
    Taxonomy::new(&names, &edges).expect("binary tree is valid")
}

/// Root with `k` leaf children.
pub fn star(k: usize) -> Taxonomy {
    let mut names = alloc::vec![String::from("root")];
    names.extend((0..k).map(|i| format!("leaf{i}")));
    let edges: Vec<(String, String)> = names[1..]
        .iter()
        .map(|leaf| (String::from("root"), leaf.clone()))
        .collect();
    Taxonomy::new(&names, &edges).expect("star is valid")
}

/// Random rooted DAG on `n` nodes: node `i > 0` draws between one and
/// `max_parents` distinct parents among nodes `0..i`, so node 0 is the unique
/// root. `max_parents = 1` yields a tree.
pub fn random_dag<R: Rng + ?Sized>(rng: &mut R, n: usize, max_parents: usize) -> Taxonomy {
    assert!(n >= 1 && max_parents >= 1);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n {
        let k = rng.random_range(1..=max_parents.min(i));
        for p in sample(rng, i, k).into_iter() {
            edges.push((names[p].clone(), names[i].clone()));
        }
    }
    Taxonomy::new(&names, &edges).expect("generated DAG is valid")
}
