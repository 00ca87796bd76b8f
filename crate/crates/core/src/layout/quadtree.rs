//! Point quadtree with per-node mass and centre of mass, used for
//! Barnes–Hut repulsion and for radius queries during collision resolution.

const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct Node {
    center: [f64; 2],
    half: f64,
    mass: f64,
    com: [f64; 2],
    /// Child node indices, or empty for a leaf.
    children: Vec<usize>,
    points: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct QuadTree<'a> {
    positions: &'a [[f64; 2]],
    nodes: Vec<Node>,
}

impl<'a> QuadTree<'a> {
    /// Builds over `positions[i]` for every `i` in `members`.
    pub fn build(positions: &'a [[f64; 2]], members: &[usize]) -> Self {
        let mut tree = QuadTree {
            positions,
            nodes: Vec::new(),
        };
        if members.is_empty() {
            return tree;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &i in members {
            for k in 0..2 {
                lo[k] = lo[k].min(positions[i][k]);
                hi[k] = hi[k].max(positions[i][k]);
            }
        }
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        tree.insert(members.to_vec(), center, half, 0);
        tree
    }

    fn insert(&mut self, points: Vec<usize>, center: [f64; 2], half: f64, depth: usize) -> usize {
        let mass = points.len() as f64;
        let mut com = [0.0; 2];
        for &i in &points {
            com[0] += self.positions[i][0] / mass;
            com[1] += self.positions[i][1] / mass;
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            center,
            half,
            mass,
            com,
            children: Vec::new(),
            points: Vec::new(),
        });
        if points.len() <= 1 || depth >= MAX_DEPTH {
            self.nodes[id].points = points;
            return id;
        }
        let mut quadrants: [Vec<usize>; 4] = Default::default();
        for i in points {
            let p = self.positions[i];
            let q = usize::from(p[0] >= center[0]) + 2 * usize::from(p[1] >= center[1]);
            quadrants[q].push(i);
        }
        let h = half / 2.0;
        let mut children = Vec::with_capacity(4);
        for (q, pts) in quadrants.into_iter().enumerate() {
            if pts.is_empty() {
                continue;
            }
            let c = [
                center[0] + if q & 1 == 1 { h } else { -h },
                center[1] + if q & 2 == 2 { h } else { -h },
            ];
            children.push(self.insert(pts, c, h, depth + 1));
        }
        self.nodes[id].children = children;
        id
    }

    /// Sum over tree points `j ≠ skip` of `(p − p_j) / |p − p_j|²`, with far
    /// cells (width / distance < `theta`) replaced by their centre of mass.
    /// Coincident pairs contribute nothing.
    pub fn repulsion(&self, p: [f64; 2], skip: usize, theta: f64) -> [f64; 2] {
        self.repulsion_with_curvature(p, skip, theta).0
    }

    /// [`Self::repulsion`] together with the matching approximation of
    /// `Σ 1/|p − p_j|²`, which bounds the repulsion Hessian at `p`.
    pub fn repulsion_with_curvature(&self, p: [f64; 2], skip: usize, theta: f64) -> ([f64; 2], f64) {
        let mut force = [0.0; 2];
        let mut curvature = 0.0;
        if self.nodes.is_empty() {
            return (force, curvature);
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.children.is_empty() {
                for &j in &node.points {
                    if j != skip {
                        curvature += add_inverse(&mut force, p, self.positions[j], 1.0);
                    }
                }
                continue;
            }
            let dx = p[0] - node.com[0];
            let dy = p[1] - node.com[1];
            let dist = (dx * dx + dy * dy).sqrt();
            let inside = (p[0] - node.center[0]).abs() <= node.half && (p[1] - node.center[1]).abs() <= node.half;
            if !inside && dist > 0.0 && 2.0 * node.half / dist < theta {
                curvature += add_inverse(&mut force, p, node.com, node.mass);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        (force, curvature)
    }

    /// Tree points within distance `< radius` of `p`, ascending.
    pub fn within(&self, p: [f64; 2], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let gx = ((p[0] - node.center[0]).abs() - node.half).max(0.0);
            let gy = ((p[1] - node.center[1]).abs() - node.half).max(0.0);
            if gx * gx + gy * gy >= radius * radius {
                continue;
            }
            if node.children.is_empty() {
                for &j in &node.points {
                    let q = self.positions[j];
                    if (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) < radius * radius {
                        out.push(j);
                    }
                }
            } else {
                stack.extend(node.children.iter());
            }
        }
        out.sort_unstable();
        out
    }
}

/// Adds `mass · (p − q)/|p − q|²` and returns `mass/|p − q|²`.
fn add_inverse(force: &mut [f64; 2], p: [f64; 2], q: [f64; 2], mass: f64) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let d2 = dx * dx + dy * dy;
    if d2 > 0.0 {
        force[0] += mass * dx / d2;
        force[1] += mass * dy / d2;
        mass / d2
    } else {
        0.0
    }
}
