use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, (dx, dy): (i32, i32)) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn in_bounds(self, size: u32) -> bool {
        self.x >= 0 && self.y >= 0 && (self.x as u32) < size && (self.y as u32) < size
    }

    pub fn dist2(self, other: Cell) -> i32 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Cell) -> f64 {
        (self.dist2(other) as f64).sqrt()
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// Within Euclidean `range`, compared exactly in squared integer form.
    pub fn within_range(self, other: Cell, range: u32) -> bool {
        self.dist2(other) <= (range * range) as i32
    }
}

/// Cells strictly between `from` and `to` on the integer line walk (Bresenham)
/// joining their centers.
pub fn cells_between(from: Cell, to: Cell) -> Vec<Cell> {
    let mut out = Vec::new();
    let dx = (to.x - from.x).abs();
    let dy = -(to.y - from.y).abs();
    let sx = if from.x < to.x { 1 } else { -1 };
    let sy = if from.y < to.y { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (from.x, from.y);
    loop {
        if x == to.x && y == to.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        if x == to.x && y == to.y {
            break;
        }
        out.push(Cell::new(x, y));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_and_diagonal_walks() {
        assert_eq!(
            cells_between(Cell::new(0, 0), Cell::new(3, 0)),
            vec![Cell::new(1, 0), Cell::new(2, 0)]
        );
        assert_eq!(
            cells_between(Cell::new(0, 0), Cell::new(2, 2)),
            vec![Cell::new(1, 1)]
        );
        assert!(cells_between(Cell::new(4, 4), Cell::new(5, 5)).is_empty());
        assert!(cells_between(Cell::new(4, 4), Cell::new(4, 4)).is_empty());
    }

    #[test]
    fn walk_is_symmetric_in_length_and_contiguous() {
        for (a, b) in [((0, 0), (7, 3)), ((5, 9), (1, 2)), ((3, 3), (3, 10))] {
            let (a, b) = (Cell::new(a.0, a.1), Cell::new(b.0, b.1));
            let fwd = cells_between(a, b);
            assert_eq!(fwd.len() as i32, a.chebyshev(b) - 1);
            let mut prev = a;
            for c in fwd.iter().chain(std::iter::once(&b)) {
                assert_eq!(prev.chebyshev(*c), 1);
                prev = *c;
            }
        }
    }

    #[test]
    fn three_four_five() {
        assert_eq!(Cell::new(0, 0).distance(Cell::new(3, 4)), 5.0);
        assert!(Cell::new(0, 0).within_range(Cell::new(3, 4), 5));
        assert!(!Cell::new(0, 0).within_range(Cell::new(3, 4), 4));
    }
}
