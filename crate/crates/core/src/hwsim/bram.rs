use super::SimError;

/// Which port an access used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Read,
    Write,
}

/// Row-addressed block RAM of `n`-bit words with one read and one write port.
///
/// A second access on the same port within one cycle is a simulation error.
#[derive(Debug, Clone)]
pub struct BramModel {
    name: String,
    width: usize,
    depth: usize,
    data: Vec<i32>,
    last_read: Option<u64>,
    last_write: Option<u64>,
    reads: u64,
    writes: u64,
}

impl BramModel {
    pub fn new(name: impl Into<String>, depth: usize, width: usize) -> Self {
        Self {
            name: name.into(),
            width,
            depth,
            data: vec![0; depth * width],
            last_read: None,
            last_write: None,
            reads: 0,
            writes: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Lanes per row.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of rows.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }

    fn claim(&mut self, port: Port, cycle: u64) -> Result<(), SimError> {
        let slot = match port {
            Port::Read => &mut self.last_read,
            Port::Write => &mut self.last_write,
        };
        if *slot == Some(cycle) {
            return Err(SimError::PortConflict {
                bram: self.name.clone(),
                cycle,
                port,
            });
        }
        *slot = Some(cycle);
        Ok(())
    }

    fn range(&self, row: usize) -> Result<std::ops::Range<usize>, SimError> {
        if row >= self.depth {
            return Err(SimError::BramBounds {
                bram: self.name.clone(),
                row,
                depth: self.depth,
            });
        }
        Ok(row * self.width..(row + 1) * self.width)
    }

    pub fn read_row(&mut self, cycle: u64, row: usize) -> Result<&[i32], SimError> {
        let r = self.range(row)?;
        self.claim(Port::Read, cycle)?;
        self.reads += 1;
        Ok(&self.data[r])
    }

    pub fn write_row(&mut self, cycle: u64, row: usize, values: &[i32]) -> Result<(), SimError> {
        let r = self.range(row)?;
        if values.len() != self.width {
            return Err(SimError::Shape(format!(
                "{}: writing {} lanes into a {}-lane row",
                self.name,
                values.len(),
                self.width
            )));
        }
        self.claim(Port::Write, cycle)?;
        self.writes += 1;
        self.data[r].copy_from_slice(values);
        Ok(())
    }

    /// Untimed access for loading inputs and inspecting state.
    pub fn peek_row(&self, row: usize) -> Result<&[i32], SimError> {
        let r = self.range(row)?;
        Ok(&self.data[r])
    }

    pub fn poke_row(&mut self, row: usize, values: &[i32]) -> Result<(), SimError> {
        let r = self.range(row)?;
        if values.len() != self.width {
            return Err(SimError::Shape(format!(
                "{}: loading {} lanes into a {}-lane row",
                self.name,
                values.len(),
                self.width
            )));
        }
        self.data[r].copy_from_slice(values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_access_per_port_per_cycle() {
        let mut b = BramModel::new("b", 4, 2);
        b.write_row(0, 1, &[3, 4]).unwrap();
        assert_eq!(b.read_row(0, 1).unwrap(), &[3, 4]);
        assert!(matches!(b.read_row(0, 2), Err(SimError::PortConflict { port: Port::Read, .. })));
        assert!(matches!(b.write_row(0, 2, &[0, 0]), Err(SimError::PortConflict { port: Port::Write, .. })));
        assert!(b.read_row(1, 2).is_ok());
        assert_eq!((b.reads(), b.writes()), (2, 1));
    }

    #[test]
    fn bounds_and_width_are_checked() {
        let mut b = BramModel::new("b", 2, 3);
        assert!(matches!(b.read_row(0, 2), Err(SimError::BramBounds { .. })));
        assert!(b.write_row(0, 0, &[1, 2]).is_err());
        assert!(b.poke_row(1, &[1, 2, 3]).is_ok());
        assert_eq!(b.peek_row(1).unwrap(), &[1, 2, 3]);
    }
}
