//! Minimal reverse-mode differentiation over scalar operations.
//!
//! Numeric code that needs gradients is written once against [`Ops`]. Running
//! it with [`Plain`] evaluates ordinary `f64` arithmetic; running it with a
//! [`Tape`] performs the exact same arithmetic while recording a Wengert list
//! that [`Tape::gradient`] sweeps backwards. Both executions therefore agree
//! bit for bit on the forward value.
//!
//! Piecewise functions are expressed by choosing a branch on the operand value
//! and recording the active branch as a [`Op::Piecewise`] node. Constants never
//! touch the tape.

/// Scalar arithmetic back-end.
pub trait Ops {
    type S: Copy + std::fmt::Debug;

    fn constant(&mut self, v: f64) -> Self::S;
    fn value(&self, s: Self::S) -> f64;

    fn add(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn sub(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn mul(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn div(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn sqrt(&mut self, a: Self::S) -> Self::S;
    fn sin(&mut self, a: Self::S) -> Self::S;
    fn cos(&mut self, a: Self::S) -> Self::S;
    /// `scale · a + offset`, tagged with the branch of the piecewise function
    /// it came from.
    fn piecewise(&mut self, a: Self::S, scale: f64, offset: f64, branch: u8) -> Self::S;
    /// Larger operand; ties go to `a`.
    fn max(&mut self, a: Self::S, b: Self::S) -> Self::S;
    /// `Σ coeffᵢ · sᵢ`, accumulated left to right starting from `0.0`.
    fn weighted_sum(&mut self, terms: &[(Self::S, f64)]) -> Self::S;

    fn square(&mut self, a: Self::S) -> Self::S {
        self.mul(a, a)
    }
}

/// Plain `f64` evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Ops for Plain {
    type S = f64;

    fn constant(&mut self, v: f64) -> f64 {
        v
    }
    fn value(&self, s: f64) -> f64 {
        s
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn sqrt(&mut self, a: f64) -> f64 {
        a.sqrt()
    }
    fn sin(&mut self, a: f64) -> f64 {
        a.sin()
    }
    fn cos(&mut self, a: f64) -> f64 {
        a.cos()
    }
    fn piecewise(&mut self, a: f64, scale: f64, offset: f64, _branch: u8) -> f64 {
        scale * a + offset
    }
    fn max(&mut self, a: f64, b: f64) -> f64 {
        if a >= b {
            a
        } else {
            b
        }
    }
    fn weighted_sum(&mut self, terms: &[(f64, f64)]) -> f64 {
        let mut acc = 0.0;
        for &(s, c) in terms {
            acc += c * s;
        }
        acc
    }
}

const CONST: u32 = u32::MAX;

/// Value on a [`Tape`]: either a recorded node or an untracked constant.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    idx: u32,
    val: f64,
}

impl Var {
    pub fn value(&self) -> f64 {
        self.val
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    pub fn node(&self) -> Option<usize> {
        (self.idx != CONST).then_some(self.idx as usize)
    }
}

/// Recorded elementary operation. Constant operands are stored inline.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Add(Operand, Operand),
    Sub(Operand, Operand),
    Mul(Operand, Operand),
    Div(Operand, Operand),
    Sqrt(u32),
    Sin(u32),
    Cos(u32),
    Piecewise {
        arg: u32,
        scale: f64,
        offset: f64,
        branch: u8,
    },
    Max {
        a: Operand,
        b: Operand,
        took_a: bool,
    },
    /// Terms live in `Tape::terms[start..start + len]`.
    WeightedSum {
        start: u32,
        len: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand {
    Node(u32),
    Const(f64),
}

impl Operand {
    fn of(v: Var) -> Self {
        if v.idx == CONST {
            Operand::Const(v.val)
        } else {
            Operand::Node(v.idx)
        }
    }
}

/// Wengert list for one scalar function evaluation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<f64>,
    terms: Vec<(Operand, f64)>,
    inputs: Vec<u32>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    /// Registers an independent variable.
    pub fn input(&mut self, value: f64) -> Var {
        let v = self.push(Op::Input, value);
        self.inputs.push(v.idx);
        v
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        let idx = u32::try_from(self.ops.len()).expect("tape exceeds u32 nodes");
        self.ops.push(op);
        self.values.push(value);
        Var { idx, val: value }
    }

    fn binary(&mut self, a: Var, b: Var, value: f64, make: fn(Operand, Operand) -> Op) -> Var {
        if a.is_constant() && b.is_constant() {
            Var {
                idx: CONST,
                val: value,
            }
        } else {
            self.push(make(Operand::of(a), Operand::of(b)), value)
        }
    }

    fn unary(&mut self, a: Var, value: f64, make: fn(u32) -> Op) -> Var {
        if a.is_constant() {
            Var {
                idx: CONST,
                val: value,
            }
        } else {
            self.push(make(a.idx), value)
        }
    }

    fn operand_value(values: &[f64], o: Operand) -> f64 {
        match o {
            Operand::Node(i) => values[i as usize],
            Operand::Const(c) => c,
        }
    }

    /// Adjoints of `output` with respect to every input, in registration order.
    pub fn gradient(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.ops.len()];
        let Some(out) = output.node() else {
            return vec![0.0; self.inputs.len()];
        };
        adj[out] = 1.0;
        let vals = &self.values;
        let add_to = |adj: &mut Vec<f64>, o: Operand, g: f64| {
            if let Operand::Node(i) = o {
                adj[i as usize] += g;
            }
        };
        for n in (0..=out).rev() {
            let g = adj[n];
            if g == 0.0 {
                continue;
            }
            match &self.ops[n] {
                Op::Input => {}
                Op::Add(a, b) => {
                    add_to(&mut adj, *a, g);
                    add_to(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    add_to(&mut adj, *a, g);
                    add_to(&mut adj, *b, -g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (Self::operand_value(vals, *a), Self::operand_value(vals, *b));
                    add_to(&mut adj, *a, g * vb);
                    add_to(&mut adj, *b, g * va);
                }
                Op::Div(a, b) => {
                    let vb = Self::operand_value(vals, *b);
                    add_to(&mut adj, *a, g / vb);
                    add_to(&mut adj, *b, -g * vals[n] / vb);
                }
                Op::Sqrt(a) => adj[*a as usize] += g * 0.5 / vals[n],
                Op::Sin(a) => adj[*a as usize] += g * vals[*a as usize].cos(),
                Op::Cos(a) => adj[*a as usize] += -g * vals[*a as usize].sin(),
                Op::Piecewise { arg, scale, .. } => adj[*arg as usize] += g * scale,
                Op::Max { a, b, took_a } => {
                    add_to(&mut adj, if *took_a { *a } else { *b }, g);
                }
                Op::WeightedSum { start, len } => {
                    for &(o, c) in &self.terms[*start as usize..(*start + *len) as usize] {
                        add_to(&mut adj, o, g * c);
                    }
                }
            }
        }
        self.inputs.iter().map(|&i| adj[i as usize]).collect()
    }

    /// Re-evaluates every node from new input values, keeping each recorded
    /// branch. Returns the new value of `output`.
    pub fn replay(&self, inputs: &[f64], output: Var) -> f64 {
        assert_eq!(inputs.len(), self.inputs.len(), "input count mismatch");
        let Some(out) = output.node() else {
            return output.val;
        };
        let mut vals = vec![0.0; self.ops.len()];
        let mut next_input = 0;
        for n in 0..=out {
            let ov = |o: Operand, vals: &Vec<f64>| Self::operand_value(vals, o);
            vals[n] = match &self.ops[n] {
                Op::Input => {
                    let v = inputs[next_input];
                    next_input += 1;
                    v
                }
                Op::Add(a, b) => ov(*a, &vals) + ov(*b, &vals),
                Op::Sub(a, b) => ov(*a, &vals) - ov(*b, &vals),
                Op::Mul(a, b) => ov(*a, &vals) * ov(*b, &vals),
                Op::Div(a, b) => ov(*a, &vals) / ov(*b, &vals),
                Op::Sqrt(a) => vals[*a as usize].sqrt(),
                Op::Sin(a) => vals[*a as usize].sin(),
                Op::Cos(a) => vals[*a as usize].cos(),
                Op::Piecewise {
                    arg, scale, offset, ..
                } => scale * vals[*arg as usize] + offset,
                Op::Max { a, b, took_a } => {
                    if *took_a {
                        ov(*a, &vals)
                    } else {
                        ov(*b, &vals)
                    }
                }
                Op::WeightedSum { start, len } => {
                    let mut acc = 0.0;
                    for &(o, c) in &self.terms[*start as usize..(*start + *len) as usize] {
                        acc += c * Self::operand_value(&vals, o);
                    }
                    acc
                }
            };
        }
        vals[out]
    }
}

impl Ops for Tape {
    type S = Var;

    fn constant(&mut self, v: f64) -> Var {
        Var { idx: CONST, val: v }
    }
    fn value(&self, s: Var) -> f64 {
        s.val
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, a.val + b.val, Op::Add)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, a.val - b.val, Op::Sub)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, a.val * b.val, Op::Mul)
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, a.val / b.val, Op::Div)
    }
    fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, a.val.sqrt(), Op::Sqrt)
    }
    fn sin(&mut self, a: Var) -> Var {
        self.unary(a, a.val.sin(), Op::Sin)
    }
    fn cos(&mut self, a: Var) -> Var {
        self.unary(a, a.val.cos(), Op::Cos)
    }
    fn piecewise(&mut self, a: Var, scale: f64, offset: f64, branch: u8) -> Var {
        let value = scale * a.val + offset;
        if a.is_constant() {
            return Var {
                idx: CONST,
                val: value,
            };
        }
        self.push(
            Op::Piecewise {
                arg: a.idx,
                scale,
                offset,
                branch,
            },
            value,
        )
    }
    fn max(&mut self, a: Var, b: Var) -> Var {
        let took_a = a.val >= b.val;
        let chosen = if took_a { a } else { b };
        if a.is_constant() && b.is_constant() {
            return chosen;
        }
        self.push(
            Op::Max {
                a: Operand::of(a),
                b: Operand::of(b),
                took_a,
            },
            chosen.val,
        )
    }
    fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut acc = 0.0;
        for &(s, c) in terms {
            acc += c * s.val;
        }
        if terms.iter().all(|(s, _)| s.is_constant()) {
            return Var {
                idx: CONST,
                val: acc,
            };
        }
        let start = self.terms.len() as u32;
        self.terms
            .extend(terms.iter().map(|&(s, c)| (Operand::of(s), c)));
        self.push(
            Op::WeightedSum {
                start,
                len: terms.len() as u32,
            },
            acc,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock<O: Ops>(ops: &mut O, x: O::S, y: O::S) -> O::S {
        let one = ops.constant(1.0);
        let a = ops.sub(one, x);
        let a2 = ops.square(a);
        let x2 = ops.square(x);
        let b = ops.sub(y, x2);
        let b2 = ops.square(b);
        let hundred = ops.constant(100.0);
        let t = ops.mul(hundred, b2);
        ops.add(a2, t)
    }

    #[test]
    fn gradient_of_rosenbrock() {
        let mut tape = Tape::new();
        let x = tape.input(-1.2);
        let y = tape.input(1.0);
        let f = rosenbrock(&mut tape, x, y);
        let g = tape.gradient(f);
        // ∂f/∂x = −2(1−x) − 400x(y−x²), ∂f/∂y = 200(y−x²)
        let (xv, yv) = (-1.2f64, 1.0f64);
        let gx = -2.0 * (1.0 - xv) - 400.0 * xv * (yv - xv * xv);
        let gy = 200.0 * (yv - xv * xv);
        assert!((g[0] - gx).abs() < 1e-9);
        assert!((g[1] - gy).abs() < 1e-9);
        assert_eq!(f.value(), rosenbrock(&mut Plain, xv, yv));
    }

    #[test]
    fn replay_reproduces_value() {
        let mut tape = Tape::new();
        let x = tape.input(0.7);
        let y = tape.input(-0.3);
        let s = tape.sin(x);
        let c = tape.cos(y);
        let p = tape.mul(s, c);
        let q = tape.sqrt(p);
        let r = tape.piecewise(q, -2.0, 5.0, 1);
        let m = tape.max(r, x);
        let f = tape.weighted_sum(&[(m, 0.5), (x, 2.0)]);
        assert_eq!(tape.replay(&[0.7, -0.3], f), f.value());
        // Branch kept: new inputs evaluate the recorded branch of `max`.
        let moved = tape.replay(&[0.71, -0.3], f);
        let expect = 0.5 * (-2.0 * (0.71f64.sin() * 0.3f64.cos()).sqrt() + 5.0) + 2.0 * 0.71;
        assert!((moved - expect).abs() < 1e-12);
    }

    #[test]
    fn constants_are_not_recorded() {
        let mut tape = Tape::new();
        let a = tape.constant(2.0);
        let b = tape.constant(3.0);
        let c = tape.mul(a, b);
        assert!(c.is_constant());
        assert_eq!(c.value(), 6.0);
        assert!(tape.is_empty());
    }

    #[test]
    fn max_routes_adjoint_to_winner() {
        let mut tape = Tape::new();
        let x = tape.input(2.0);
        let y = tape.input(1.0);
        let two = tape.constant(3.0);
        let ty = tape.mul(two, y);
        let m = tape.max(x, ty);
        let g = tape.gradient(m);
        assert_eq!(g, vec![0.0, 3.0]);
    }

    #[test]
    fn division_and_sqrt_gradients() {
        let mut tape = Tape::new();
        let x = tape.input(4.0);
        let y = tape.input(2.0);
        let q = tape.div(x, y);
        let r = tape.sqrt(q);
        let g = tape.gradient(r);
        // r = sqrt(x/y); ∂r/∂x = 1/(2 sqrt(xy)), ∂r/∂y = −sqrt(x)/(2 y^{3/2})
        assert!((g[0] - 1.0 / (2.0 * 8f64.sqrt())).abs() < 1e-12);
        assert!((g[1] + 2.0 / (2.0 * 2f64.powf(1.5))).abs() < 1e-12);
    }
}
