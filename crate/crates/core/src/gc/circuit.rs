//! Boolean circuits over XOR, AND and INV.
//!
//! Wires `0..garbler_inputs` belong to the garbler, the next
//! `evaluator_inputs` wires to the evaluator, and gate `g` drives wire
//! `num_inputs + g`. A gate may only read wires numbered below its own output,
//! which makes every well-formed circuit acyclic and topologically ordered.

use sha2::{Digest, Sha256};

use super::GcError;

pub type Wire = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    Xor,
    And,
    Inv,
}

impl GateKind {
    fn code(self) -> u8 {
        match self {
            GateKind::Xor => 1,
            GateKind::And => 2,
            GateKind::Inv => 3,
        }
    }
}

/// `b` is ignored by `Inv`; canonical form sets it equal to `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub a: Wire,
    pub b: Wire,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanCircuit {
    pub garbler_inputs: u32,
    pub evaluator_inputs: u32,
    pub gates: Vec<Gate>,
    pub outputs: Vec<Wire>,
}

impl BooleanCircuit {
    pub fn num_inputs(&self) -> usize {
        self.garbler_inputs as usize + self.evaluator_inputs as usize
    }

    pub fn num_wires(&self) -> usize {
        self.num_inputs() + self.gates.len()
    }

    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::And).count()
    }

    pub fn validate(&self) -> Result<(), GcError> {
        let inputs = self.num_inputs();
        if inputs == 0 {
            return Err(GcError::Malformed("circuit has no inputs".into()));
        }
        if self.num_wires() > u32::MAX as usize {
            return Err(GcError::Malformed("too many wires".into()));
        }
        for (g, gate) in self.gates.iter().enumerate() {
            let out = inputs + g;
            if gate.a as usize >= out || gate.b as usize >= out {
                return Err(GcError::Malformed(format!("gate {g} reads a wire that is not yet defined")));
            }
        }
        let wires = self.num_wires();
        if let Some(w) = self.outputs.iter().find(|&&w| w as usize >= wires) {
            return Err(GcError::Malformed(format!("output wire {w} does not exist")));
        }
        Ok(())
    }

    /// Plain evaluation on the concatenated input `x` (garbler bits first).
    pub fn evaluate(&self, x: &[bool]) -> Result<Vec<bool>, GcError> {
        self.validate()?;
        if x.len() != self.num_inputs() {
            return Err(GcError::Width {
                expected: self.num_inputs(),
                got: x.len(),
            });
        }
        let mut w = Vec::with_capacity(self.num_wires());
        w.extend_from_slice(x);
        for gate in &self.gates {
            let (a, b) = (w[gate.a as usize], w[gate.b as usize]);
            w.push(match gate.kind {
                GateKind::Xor => a ^ b,
                GateKind::And => a & b,
                GateKind::Inv => !a,
            });
        }
        Ok(self.outputs.iter().map(|&o| w[o as usize]).collect())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.gates.len() * 9 + self.outputs.len() * 4);
        out.extend_from_slice(b"puppy/circuit/v1");
        out.extend_from_slice(&self.garbler_inputs.to_be_bytes());
        out.extend_from_slice(&self.evaluator_inputs.to_be_bytes());
        out.extend_from_slice(&(self.gates.len() as u32).to_be_bytes());
        for g in &self.gates {
            out.push(g.kind.code());
            out.extend_from_slice(&g.a.to_be_bytes());
            let b = if g.kind == GateKind::Inv { g.a } else { g.b };
            out.extend_from_slice(&b.to_be_bytes());
        }
        out.extend_from_slice(&(self.outputs.len() as u32).to_be_bytes());
        for o in &self.outputs {
            out.extend_from_slice(&o.to_be_bytes());
        }
        out
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }
}

/// Builds circuits gate by gate. Input counts are fixed up front so gate
/// output wires can be numbered immediately.
pub struct CircuitBuilder {
    garbler_inputs: u32,
    evaluator_inputs: u32,
    gates: Vec<Gate>,
    zero: Option<Wire>,
    one: Option<Wire>,
}

impl CircuitBuilder {
    pub fn new(garbler_inputs: u32, evaluator_inputs: u32) -> Self {
        assert!(garbler_inputs + evaluator_inputs > 0, "a circuit needs at least one input");
        Self {
            garbler_inputs,
            evaluator_inputs,
            gates: Vec::new(),
            zero: None,
            one: None,
        }
    }

    pub fn garbler_input(&self, i: u32) -> Wire {
        assert!(i < self.garbler_inputs);
        i
    }

    pub fn evaluator_input(&self, i: u32) -> Wire {
        assert!(i < self.evaluator_inputs);
        self.garbler_inputs + i
    }

    fn push(&mut self, kind: GateKind, a: Wire, b: Wire) -> Wire {
        let out = self.garbler_inputs + self.evaluator_inputs + self.gates.len() as u32;
        debug_assert!(a < out && b < out);
        self.gates.push(Gate { kind, a, b });
        out
    }

    pub fn xor(&mut self, a: Wire, b: Wire) -> Wire {
        self.push(GateKind::Xor, a, b)
    }

    pub fn and(&mut self, a: Wire, b: Wire) -> Wire {
        self.push(GateKind::And, a, b)
    }

    pub fn inv(&mut self, a: Wire) -> Wire {
        self.push(GateKind::Inv, a, a)
    }

    pub fn or(&mut self, a: Wire, b: Wire) -> Wire {
        let x = self.xor(a, b);
        let y = self.and(a, b);
        self.xor(x, y)
    }

    /// Constant 0, built as `w XOR w` on input wire 0.
    pub fn zero(&mut self) -> Wire {
        if let Some(z) = self.zero {
            return z;
        }
        let z = self.xor(0, 0);
        self.zero = Some(z);
        z
    }

    pub fn one(&mut self) -> Wire {
        if let Some(o) = self.one {
            return o;
        }
        let z = self.zero();
        let o = self.inv(z);
        self.one = Some(o);
        o
    }

    pub fn constant(&mut self, bit: bool) -> Wire {
        if bit {
            self.one()
        } else {
            self.zero()
        }
    }

    /// `width` little-endian constant bits of `value`.
    pub fn constant_bits(&mut self, value: u64, width: usize) -> Vec<Wire> {
        (0..width).map(|i| self.constant(i < 64 && (value >> i) & 1 == 1)).collect()
    }

    /// `sel ? b : a`, one AND gate.
    pub fn mux(&mut self, sel: Wire, a: Wire, b: Wire) -> Wire {
        let d = self.xor(a, b);
        let m = self.and(sel, d);
        self.xor(a, m)
    }

    pub fn mux_bits(&mut self, sel: Wire, a: &[Wire], b: &[Wire]) -> Vec<Wire> {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| self.mux(sel, x, y)).collect()
    }

    pub fn and_all(&mut self, bits: &[Wire]) -> Wire {
        match bits {
            [] => self.one(),
            [w] => *w,
            _ => {
                let (l, r) = bits.split_at(bits.len() / 2);
                let l = self.and_all(l);
                let r = self.and_all(r);
                self.and(l, r)
            }
        }
    }

    pub fn or_all(&mut self, bits: &[Wire]) -> Wire {
        match bits {
            [] => self.zero(),
            [w] => *w,
            _ => {
                let (l, r) = bits.split_at(bits.len() / 2);
                let l = self.or_all(l);
                let r = self.or_all(r);
                self.or(l, r)
            }
        }
    }

    pub fn equal(&mut self, a: &[Wire], b: &[Wire]) -> Wire {
        assert_eq!(a.len(), b.len());
        let same: Vec<Wire> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = self.xor(x, y);
                self.inv(d)
            })
            .collect();
        self.and_all(&same)
    }

    /// `a - b` over equal widths (little-endian), returning the difference and
    /// a flag that is 1 iff `a >= b`. One AND per bit.
    pub fn sub(&mut self, a: &[Wire], b: &[Wire]) -> (Vec<Wire>, Wire) {
        assert_eq!(a.len(), b.len());
        // a + !b + 1; the final carry is the "no borrow" flag.
        let mut carry = self.one();
        let mut diff = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let ny = self.inv(y);
            let t = self.xor(x, ny);
            diff.push(self.xor(t, carry));
            let xc = self.xor(x, carry);
            let yc = self.xor(ny, carry);
            let m = self.and(xc, yc);
            carry = self.xor(carry, m);
        }
        (diff, carry)
    }

    /// Adds one bit into a little-endian counter, dropping the final carry.
    pub fn increment_by(&mut self, counter: &[Wire], bit: Wire) -> Vec<Wire> {
        let mut carry = bit;
        let mut out = Vec::with_capacity(counter.len());
        for &c in counter {
            out.push(self.xor(c, carry));
            carry = self.and(c, carry);
        }
        out
    }

    pub fn build(self, outputs: Vec<Wire>) -> Result<BooleanCircuit, GcError> {
        let c = BooleanCircuit {
            garbler_inputs: self.garbler_inputs,
            evaluator_inputs: self.evaluator_inputs,
            gates: self.gates,
            outputs,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Little-endian bits of `value`.
pub fn to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| i < 64 && (value >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().take(64).enumerate().fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
}

/// Bits of a byte string, least significant bit of each byte first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes.iter().flat_map(|&b| (0..8).map(move |i| (b >> i) & 1 == 1)).collect()
}
