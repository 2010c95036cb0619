use super::Scalar;

/// Borrowed strided matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    data: &'a [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Scalar> MatRef<'a, T> {
    pub fn dense(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(rows * cols <= data.len(), "view exceeds buffer");
        Self { data, offset: 0, rows, cols, rs: cols, cs: 1 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    /// Column block `[.., col0..col0+cols]`.
    pub fn cols_range(self, col0: usize, cols: usize) -> Self {
        assert!(col0 + cols <= self.cols);
        Self { offset: self.offset + col0 * self.cs, cols, ..self }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[self.offset + i * self.rs + j * self.cs]
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
    }
}

/// Mutable strided matrix view.
#[derive(Debug)]
pub struct MatMut<'a, T> {
    data: &'a mut [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Scalar> MatMut<'a, T> {
    pub fn dense(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        assert!(rows * cols <= data.len(), "view exceeds buffer");
        Self { data, offset: 0, rows, cols, rs: cols, cs: 1 }
    }

    pub fn cols_range(self, col0: usize, cols: usize) -> Self {
        assert!(col0 + cols <= self.cols);
        Self { offset: self.offset + col0 * self.cs, cols, ..self }
    }

    pub fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }
}

/// `c = alpha * a * b + beta * c` over strided views.
///
/// Panics on inconsistent dimensions; callers validate shapes first and
/// surface dimension errors themselves.
pub fn gemm<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: MatMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    assert!(a.last_index() < a.data.len().max(1) || a.rows * a.cols == 0);
    assert!(b.last_index() < b.data.len().max(1) || b.rows * b.cols == 0);
    let c_last = if c.rows == 0 || c.cols == 0 {
        c.offset
    } else {
        c.offset + (c.rows - 1) * c.rs + (c.cols - 1) * c.cs
    };
    assert!(c_last < c.data.len().max(1) || c.rows * c.cols == 0);
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        // Empty inner dimension: c = beta * c.
        for i in 0..c.rows {
            for j in 0..c.cols {
                let idx = c.offset + i * c.rs + j * c.cs;
                c.data[idx] = if beta == T::zero() { T::zero() } else { beta * c.data[idx] };
            }
        }
        return;
    }
    // SAFETY: every index touched is bounded by the `last_index` checks above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_views() {
        // a = [[1,2,3],[4,5,6]], a^T a = [[17,22,27],[22,29,36],[27,36,45]]
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut c = [0.0f64; 9];
        let av = MatRef::dense(&a, 2, 3);
        gemm(1.0, av.t(), av, 0.0, MatMut::dense(&mut c, 3, 3));
        assert_eq!(c, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
    }

    #[test]
    fn column_blocks() {
        // Multiply only the second column block of a 2x4 matrix.
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let eye = [1.0f64, 0.0, 0.0, 1.0];
        let mut c = [0.0f64; 4];
        gemm(
            1.0,
            MatRef::dense(&a, 2, 4).cols_range(2, 2),
            MatRef::dense(&eye, 2, 2),
            0.0,
            MatMut::dense(&mut c, 2, 2),
        );
        assert_eq!(c, [3.0, 4.0, 7.0, 8.0]);
    }
}
