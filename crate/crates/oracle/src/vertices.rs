use knockout::market::{MarketTree, NodeId};

const TOL: f64 = 1e-9;

/// Extreme points of `{pi >= 0, sum pi = 1, sum_c pi_c dS_c = 0}` for one
/// node with child price increments `dS_c`. Each is the unique solution on a
/// support of at most `d + 1` children.
pub fn one_step_vertices(increments: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let c = increments.len();
    let d = increments.first().map_or(0, Vec::len);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for size in 1..=(d + 1).min(c) {
        for support in subsets(c, size) {
            // Rows: one per asset plus normalization; columns: the support.
            let mut rows: Vec<Vec<f64>> = (0..d)
                .map(|a| {
                    let mut r: Vec<f64> = support.iter().map(|&j| increments[j][a]).collect();
                    r.push(0.0);
                    r
                })
                .collect();
            let mut norm = vec![1.0; size];
            norm.push(1.0);
            rows.push(norm);
            let Some(x) = unique_solution(rows, size) else {
                continue;
            };
            if x.iter().any(|v| *v < -TOL) {
                continue;
            }
            let mut pi = vec![0.0; c];
            for (&j, v) in support.iter().zip(&x) {
                pi[j] = v.max(0.0);
            }
            push_unique(&mut out, pi);
        }
    }
    out
}

/// Vertices of the martingale polytope of `tree` as products of one-step
/// vertices, in leaf-vector order, sorted lexicographically.
pub fn product_vertices(tree: &MarketTree) -> Vec<Vec<f64>> {
    let n = tree.num_leaves();
    let mut out = below(tree, tree.root().id, n);
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
    out
}

fn below(tree: &MarketTree, id: NodeId, n: usize) -> Vec<Vec<f64>> {
    if tree.is_terminal(id) {
        let mut unit = vec![0.0; n];
        unit[tree.leaf_position(id).expect("terminal node is a leaf")] = 1.0;
        return vec![unit];
    }
    let node = tree.node(id).expect("node exists");
    let children: Vec<_> = tree.children(id).collect();
    let increments: Vec<Vec<f64>> = children
        .iter()
        .map(|c| c.prices.iter().zip(&node.prices).map(|(a, b)| a - b).collect())
        .collect();
    let subtrees: Vec<Vec<Vec<f64>>> = children.iter().map(|c| below(tree, c.id, n)).collect();
    let mut out = Vec::new();
    for pi in one_step_vertices(&increments) {
        let used: Vec<usize> = (0..children.len()).filter(|&j| pi[j] > 0.0).collect();
        let mut choice = vec![0usize; used.len()];
        loop {
            let mut q = vec![0.0; n];
            for (slot, &j) in used.iter().enumerate() {
                for (acc, v) in q.iter_mut().zip(&subtrees[j][choice[slot]]) {
                    *acc += pi[j] * v;
                }
            }
            push_unique(&mut out, q);
            // Odometer over the subtree choices.
            let mut slot = 0;
            while slot < used.len() {
                choice[slot] += 1;
                if choice[slot] < subtrees[used[slot]].len() {
                    break;
                }
                choice[slot] = 0;
                slot += 1;
            }
            if slot == used.len() {
                break;
            }
        }
    }
    out
}

fn push_unique(out: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    let dup = out
        .iter()
        .any(|u| u.iter().zip(&v).all(|(a, b)| (a - b).abs() <= TOL));
    if !dup {
        out.push(v);
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// Gauss-Jordan elimination on the augmented rows `[A | b]`. Returns the
/// solution when `A` has full column rank and the system is consistent.
fn unique_solution(mut rows: Vec<Vec<f64>>, cols: usize) -> Option<Vec<f64>> {
    let m = rows.len();
    let mut r = 0;
    for col in 0..cols {
        let pivot = (r..m).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))?;
        if rows[pivot][col].abs() <= 1e-10 {
            return None;
        }
        rows.swap(r, pivot);
        let p = rows[r][col];
        for v in rows[r].iter_mut() {
            *v /= p;
        }
        for i in 0..m {
            if i != r {
                let f = rows[i][col];
                if f != 0.0 {
                    for j in 0..=cols {
                        rows[i][j] -= f * rows[r][j];
                    }
                }
            }
        }
        r += 1;
    }
    if rows[r..].iter().any(|row| row[cols].abs() > TOL) {
        return None;
    }
    Some((0..cols).map(|i| rows[i][cols]).collect())
}
