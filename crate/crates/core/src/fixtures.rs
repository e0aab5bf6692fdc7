//! Small named graphs used throughout the tests and examples.

use crate::dag::{Dag, EnvMode, Role};

use Role::{Env as E, Predictor as X, Response as Y};

/// `E→X1, E→X2, X1→X3, X2→X3, X2→X4, X3→Y, Y→X4`: ICP finds nothing, `S_AS = {1,2,3}`.
pub fn diamond_with_collider() -> Dag {
    Dag::from_roles(
        4,
        &[
            (E, X(1)),
            (E, X(2)),
            (X(1), X(3)),
            (X(2), X(3)),
            (X(2), X(4)),
            (X(3), Y),
            (Y, X(4)),
        ],
        EnvMode::Exogenous,
    )
    .expect("valid graph")
}

/// Like [`diamond_with_collider`] but with `X1→Y` instead of `X1→X3`: ICP finds `{1}`.
pub fn two_routes_with_collider() -> Dag {
    Dag::from_roles(
        4,
        &[
            (E, X(1)),
            (E, X(2)),
            (X(1), Y),
            (X(2), X(3)),
            (X(2), X(4)),
            (X(3), Y),
            (Y, X(4)),
        ],
        EnvMode::Exogenous,
    )
    .expect("valid graph")
}

/// `E→X1→…→Xd→Y`; with `d = 0` this is the single edge `E→Y`.
pub fn chain(d: usize) -> Dag {
    let nodes: Vec<Role> = std::iter::once(E)
        .chain((1..=d).map(X))
        .chain(std::iter::once(Y))
        .collect();
    let edges: Vec<(Role, Role)> = nodes.windows(2).map(|w| (w[0], w[1])).collect();
    Dag::from_roles(d, &edges, EnvMode::Exogenous).expect("valid graph")
}

/// `paths` disjoint directed paths `E→X→X→Y`, each with two predictors.
/// Has `2^paths` minimally invariant sets.
pub fn parallel_paths(paths: usize) -> Dag {
    let mut edges = Vec::new();
    for p in 0..paths {
        let (a, b) = (2 * p + 1, 2 * p + 2);
        edges.extend([(E, X(a)), (X(a), X(b)), (X(b), Y)]);
    }
    Dag::from_roles(2 * paths, &edges, EnvMode::Exogenous).expect("valid graph")
}
