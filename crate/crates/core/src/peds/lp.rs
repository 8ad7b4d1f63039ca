//! Two-dimensional linear program over half-planes with a circular speed
//! bound, in the incremental form used by reciprocal velocity obstacles.

use crate::geom::Vec2;

const LP_EPSILON: f64 = 1e-9;

/// A velocity-space half-plane. Permitted velocities `v` satisfy
/// `(v - point) . normal >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    /// Direction of the boundary line; the permitted side is on its left.
    pub fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }

    fn from_line(point: Vec2, direction: Vec2) -> Self {
        Self {
            point,
            normal: direction.perp(),
        }
    }

    /// Signed violation of `v`: positive when `v` lies outside.
    pub fn violation(&self, v: Vec2) -> f64 {
        (self.point - v).dot(self.normal)
    }

    pub fn contains(&self, v: Vec2) -> bool {
        self.violation(v) <= 0.0
    }
}

/// Optimizes along the boundary of `lines[line_no]` subject to the previous
/// lines and the speed disk. Returns `None` when infeasible.
fn program1(
    lines: &[HalfPlane],
    line_no: usize,
    radius: f64,
    target: Vec2,
    direction_opt: bool,
) -> Option<Vec2> {
    let line = &lines[line_no];
    let dir = line.direction();
    let dot = line.point.dot(dir);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for other in &lines[..line_no] {
        let other_dir = other.direction();
        let denominator = dir.det(other_dir);
        let numerator = other_dir.det(line.point - other.point);
        if denominator.abs() <= LP_EPSILON {
            // Parallel lines.
            if numerator < 0.0 {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if direction_opt {
        if target.dot(dir) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        dir.dot(target - line.point).clamp(t_left, t_right)
    };
    Some(line.point + dir * t)
}

/// Closest point to `target` (or farthest along `target` when
/// `direction_opt`) satisfying all lines. Returns the result and the index of
/// the first line that could not be satisfied (`lines.len()` on success).
fn program2(lines: &[HalfPlane], radius: f64, target: Vec2, direction_opt: bool) -> (Vec2, usize) {
    let mut result = if direction_opt {
        target * radius
    } else {
        target.clamp_length(radius)
    };
    for i in 0..lines.len() {
        if lines[i].violation(result) > 0.0 {
            match program1(lines, i, radius, target, direction_opt) {
                Some(v) => result = v,
                None => return (result, i),
            }
        }
    }
    (result, lines.len())
}

/// Fallback for infeasible programs: minimizes the maximum violation over
/// lines `begin..`, keeping the speed bound.
fn program3(lines: &[HalfPlane], begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].violation(result) <= distance {
            continue;
        }
        let dir_i = lines[i].direction();
        let mut projected = Vec::with_capacity(i);
        for line_j in &lines[..i] {
            let dir_j = line_j.direction();
            let determinant = dir_i.det(dir_j);
            let point = if determinant.abs() <= LP_EPSILON {
                if dir_i.dot(dir_j) > 0.0 {
                    // Same direction; the bisector is undefined.
                    continue;
                }
                (lines[i].point + line_j.point) * 0.5
            } else {
                lines[i].point
                    + dir_i * (dir_j.det(lines[i].point - line_j.point) / determinant)
            };
            let Some(direction) = (dir_j - dir_i).try_normalize() else {
                continue;
            };
            projected.push(HalfPlane::from_line(point, direction));
        }
        let previous = result;
        let (candidate, fail) = program2(&projected, radius, Vec2::new(-dir_i.y, dir_i.x), true);
        // On failure keep the previous value; this only happens through
        // floating-point error.
        result = if fail < projected.len() {
            previous
        } else {
            candidate
        };
        distance = lines[i].violation(result);
    }
    result
}

/// Velocity closest to `preferred` that satisfies every half-plane and
/// `|v| <= max_speed`. When the constraints are jointly infeasible the
/// result minimizes the largest constraint violation within the speed disk.
pub fn solve_lp2(constraints: &[HalfPlane], preferred: Vec2, max_speed: f64) -> Vec2 {
    let (result, fail) = program2(constraints, max_speed, preferred, false);
    let v = if fail < constraints.len() {
        program3(constraints, fail, max_speed, result)
    } else {
        result
    };
    // Guard the disk against rounding in the line/circle intersections.
    v.clamp_length(max_speed)
}
