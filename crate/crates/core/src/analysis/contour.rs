//! Iso-lines of a gridded field by marching squares, linked into polylines.

use std::collections::HashMap;

/// Grid edge between two neighbouring nodes: horizontal edges join `(i, j)` and
/// `(i, j+1)`, vertical edges join `(i, j)` and `(i+1, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Polylines where `field` crosses `level`. `field[i][j]` sits at `(x[j], y[i])`;
/// interpolation is linear in the given coordinates and field values.
pub fn iso_lines(x: &[f64], y: &[f64], field: &[Vec<f64>], level: f64) -> Vec<Vec<(f64, f64)>> {
    let (rows, cols) = (y.len(), x.len());
    if rows < 2 || cols < 2 {
        return Vec::new();
    }
    let f = |i: usize, j: usize| field[i][j] - level;
    let point = |e: Edge| -> (f64, f64) {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i, j + 1)),
            Edge::V(i, j) => ((i, j), (i + 1, j)),
        };
        let (a, b) = (f(i0, j0), f(i1, j1));
        let t = a / (a - b);
        (x[j0] + t * (x[j1] - x[j0]), y[i0] + t * (y[i1] - y[i0]))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            // Corners counter-clockwise from (i, j); edge k joins corner k and k+1.
            let v = [f(i, j), f(i, j + 1), f(i + 1, j + 1), f(i + 1, j)];
            if v.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let s = v.map(|v| v >= 0.0);
            let edges = [Edge::H(i, j), Edge::V(i, j + 1), Edge::H(i + 1, j), Edge::V(i, j)];
            let cut: Vec<usize> = (0..4).filter(|&k| s[k] != s[(k + 1) % 4]).collect();
            match cut.len() {
                2 => segments.push((edges[cut[0]], edges[cut[1]])),
                4 => {
                    // Saddle: the centre value decides which diagonal pair is connected.
                    let centre = v.iter().sum::<f64>() / 4.0 >= 0.0;
                    if centre == s[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }

    let mut at: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        at.entry(*a).or_default().push(k);
        at.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();

    let walk = |start: usize, from: Edge, used: &mut [bool]| {
        let mut line = vec![point(from)];
        let mut seg = start;
        let mut edge = from;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            edge = if a == edge { b } else { a };
            line.push(point(edge));
            match at[&edge].iter().find(|&&k| !used[k]) {
                Some(&k) => seg = k,
                None => break,
            }
        }
        line
    };

    // Open lines start at boundary edges, which belong to a single segment.
    for k in 0..segments.len() {
        if used[k] {
            continue;
        }
        let (a, b) = segments[k];
        if at[&a].len() == 1 {
            lines.push(walk(k, a, &mut used));
        } else if at[&b].len() == 1 {
            lines.push(walk(k, b, &mut used));
        }
    }
    // Whatever is left forms closed loops.
    for k in 0..segments.len() {
        if !used[k] {
            let a = segments[k].0;
            lines.push(walk(k, a, &mut used));
        }
    }
    lines
}
