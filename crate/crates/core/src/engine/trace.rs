use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Mutex;

use serde::Serialize;

use crate::backend::{Backend, Kind, OpCounts, Phase, SlotVector};
use crate::error::{Error, Result};

/// One primitive issued by the engine. Handles are backend vector ids.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Encode {
        out: u64,
        #[serde(skip)]
        plain: SlotVector,
    },
    Encrypt {
        input: u64,
        out: u64,
    },
    Rotate {
        input: u64,
        amount: i64,
        out: u64,
    },
    RotateHoisted {
        input: u64,
        amounts: Vec<i64>,
        outs: Vec<u64>,
    },
    Add {
        lhs: u64,
        rhs: u64,
        out: u64,
    },
    MulCt {
        lhs: u64,
        rhs: u64,
        out: u64,
    },
    MulPt {
        lhs: u64,
        rhs: u64,
        out: u64,
    },
    Mask {
        lhs: u64,
        rhs: u64,
        out: u64,
    },
}

impl PartialEq for Op {
    fn eq(&self, other: &Self) -> bool {
        use Op::*;
        match (self, other) {
            (Encode { out: a, plain: p }, Encode { out: b, plain: q }) => {
                a == b && p.level() == q.level() && p.values() == q.values()
            }
            (Encrypt { input: a, out: b }, Encrypt { input: c, out: d }) => (a, b) == (c, d),
            (
                Rotate {
                    input: a,
                    amount: b,
                    out: c,
                },
                Rotate {
                    input: d,
                    amount: e,
                    out: f,
                },
            ) => (a, b, c) == (d, e, f),
            (
                RotateHoisted {
                    input: a,
                    amounts: b,
                    outs: c,
                },
                RotateHoisted {
                    input: d,
                    amounts: e,
                    outs: f,
                },
            ) => (a, b, c) == (d, e, f),
            (
                Add {
                    lhs: a,
                    rhs: b,
                    out: c,
                },
                Add {
                    lhs: d,
                    rhs: e,
                    out: f,
                },
            )
            | (
                MulCt {
                    lhs: a,
                    rhs: b,
                    out: c,
                },
                MulCt {
                    lhs: d,
                    rhs: e,
                    out: f,
                },
            )
            | (
                MulPt {
                    lhs: a,
                    rhs: b,
                    out: c,
                },
                MulPt {
                    lhs: d,
                    rhs: e,
                    out: f,
                },
            )
            | (
                Mask {
                    lhs: a,
                    rhs: b,
                    out: c,
                },
                Mask {
                    lhs: d,
                    rhs: e,
                    out: f,
                },
            ) => (a, b, c) == (d, e, f),
            _ => false,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Encode { out, plain } => write!(f, "v{out} = encode(<{} slots>)", plain.len()),
            Op::Encrypt { input, out } => write!(f, "v{out} = encrypt(v{input})"),
            Op::Rotate { input, amount, out } => write!(f, "v{out} = rotate(v{input}, {amount:+})"),
            Op::RotateHoisted {
                input,
                amounts,
                outs,
            } => {
                let outs: Vec<String> = outs.iter().map(|o| format!("v{o}")).collect();
                let amounts: Vec<String> = amounts.iter().map(|a| format!("{a:+}")).collect();
                write!(
                    f,
                    "[{}] = rotate_hoisted(v{input}, [{}])",
                    outs.join(", "),
                    amounts.join(", ")
                )
            }
            Op::Add { lhs, rhs, out } => write!(f, "v{out} = add(v{lhs}, v{rhs})"),
            Op::MulCt { lhs, rhs, out } => write!(f, "v{out} = mul_ct(v{lhs}, v{rhs})"),
            Op::MulPt { lhs, rhs, out } => write!(f, "v{out} = mul_pt(v{lhs}, v{rhs})"),
            Op::Mask { lhs, rhs, out } => write!(f, "v{out} = mask(v{lhs}, v{rhs})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpRecord {
    #[serde(flatten)]
    pub op: Op,
    /// Level of the produced vector(s).
    pub level: u32,
}

/// A vector referenced by the trace but created before it started.
#[derive(Debug, Clone, Serialize)]
pub struct TraceInput {
    pub id: u64,
    pub kind: Kind,
    pub level: u32,
    #[serde(skip)]
    pub vector: SlotVector,
}

impl PartialEq for TraceInput {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.kind == other.kind
            && self.level == other.level
            && self.vector.values() == other.vector.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTrace {
    pub phase: Phase,
    pub ops: Vec<OpRecord>,
    pub cost: OpCounts,
    /// Lowest ciphertext level produced in this phase, if any.
    pub level_after: Option<u32>,
}

impl PhaseTrace {
    pub fn rotation_amounts(&self) -> Vec<i64> {
        let mut out = Vec::new();
        for r in &self.ops {
            match &r.op {
                Op::Rotate { amount, .. } => out.push(*amount),
                Op::RotateHoisted { amounts, .. } => {
                    out.extend(amounts.iter().copied().filter(|a| *a != 0))
                }
                _ => {}
            }
        }
        out
    }

    pub fn count(&self, pred: impl Fn(&Op) -> bool) -> usize {
        self.ops.iter().filter(|r| pred(&r.op)).count()
    }
}

/// Every primitive one einsum call issued, grouped by phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub inputs: Vec<TraceInput>,
    pub phases: Vec<PhaseTrace>,
    pub output: u64,
}

impl ExecutionTrace {
    pub fn phase(&self, phase: Phase) -> &PhaseTrace {
        self.phases
            .iter()
            .find(|p| p.phase == phase)
            .expect("every phase is recorded")
    }

    /// Re-issue the recorded primitives on `backend` and return the output.
    pub fn replay(&self, backend: &dyn Backend) -> Result<SlotVector> {
        let mut env: HashMap<u64, SlotVector> = HashMap::new();
        for input in &self.inputs {
            let plain = backend.encode(&input.vector.values())?;
            let v = match input.kind {
                Kind::Plain => plain,
                Kind::Cipher => backend.encrypt(&plain)?,
            };
            env.insert(input.id, v);
        }
        let get = |env: &HashMap<u64, SlotVector>, id: &u64| {
            env.get(id).cloned().ok_or(Error::ExpectedCipher)
        };
        for record in self.phases.iter().flat_map(|p| &p.ops) {
            match &record.op {
                Op::Encode { out, plain } => {
                    let v = backend.encode(&plain.values())?;
                    env.insert(*out, v);
                }
                Op::Encrypt { input, out } => {
                    let v = backend.encrypt(&get(&env, input)?)?;
                    env.insert(*out, v);
                }
                Op::Rotate { input, amount, out } => {
                    let v = backend.rotate(&get(&env, input)?, *amount)?;
                    env.insert(*out, v);
                }
                Op::RotateHoisted {
                    input,
                    amounts,
                    outs,
                } => {
                    let vs = backend.rotate_hoisted(&get(&env, input)?, amounts)?;
                    env.extend(outs.iter().copied().zip(vs));
                }
                Op::Add { lhs, rhs, out } => {
                    let v = backend.add(&get(&env, lhs)?, &get(&env, rhs)?)?;
                    env.insert(*out, v);
                }
                Op::MulCt { lhs, rhs, out } => {
                    let v = backend.mul_ct(&get(&env, lhs)?, &get(&env, rhs)?)?;
                    env.insert(*out, v);
                }
                Op::MulPt { lhs, rhs, out } => {
                    let v = backend.mul_pt(&get(&env, lhs)?, &get(&env, rhs)?)?;
                    env.insert(*out, v);
                }
                Op::Mask { lhs, rhs, out } => {
                    let v = backend.mask(&get(&env, lhs)?, &get(&env, rhs)?)?;
                    env.insert(*out, v);
                }
            }
        }
        get(&env, &self.output)
    }
}

impl fmt::Display for ExecutionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for input in &self.inputs {
            writeln!(
                f,
                "input v{} ({:?}, level {})",
                input.id, input.kind, input.level
            )?;
        }
        for phase in &self.phases {
            let amounts: Vec<String> = phase
                .rotation_amounts()
                .iter()
                .map(|a| format!("{a:+}"))
                .collect();
            write!(f, "[{}] {} op(s)", phase.phase.as_str(), phase.ops.len())?;
            if !amounts.is_empty() {
                write!(f, ", rotations [{}]", amounts.join(", "))?;
            }
            if phase.cost.masks > 0 {
                write!(f, ", masks {}", phase.cost.masks)?;
            }
            match phase.level_after {
                Some(l) => writeln!(f, ", level {l}")?,
                None => writeln!(f)?,
            }
            for r in &phase.ops {
                writeln!(f, "    {}  @L{}", r.op, r.level)?;
            }
        }
        write!(f, "output v{}", self.output)
    }
}

struct RecorderState {
    phase: Phase,
    known: HashSet<u64>,
    inputs: Vec<TraceInput>,
    ops: Vec<(Phase, OpRecord)>,
}

/// Backend wrapper that logs every primitive under the current phase.
pub(crate) struct Recorder<'a> {
    inner: &'a dyn Backend,
    state: Mutex<RecorderState>,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(inner: &'a dyn Backend) -> Self {
        Recorder {
            inner,
            state: Mutex::new(RecorderState {
                phase: Phase::Permute,
                known: HashSet::new(),
                inputs: Vec::new(),
                ops: Vec::new(),
            }),
        }
    }

    pub(crate) fn set_phase(&self, phase: Phase) {
        self.state.lock().unwrap().phase = phase;
    }

    fn note_inputs(&self, vectors: &[&SlotVector]) {
        let mut state = self.state.lock().unwrap();
        for v in vectors {
            if state.known.insert(v.id()) {
                state.inputs.push(TraceInput {
                    id: v.id(),
                    kind: v.kind(),
                    level: v.level(),
                    vector: (*v).clone(),
                });
            }
        }
    }

    fn record(&self, op: Op, outs: &[&SlotVector]) {
        let mut state = self.state.lock().unwrap();
        for v in outs {
            state.known.insert(v.id());
        }
        let level = outs.iter().map(|v| v.level()).min().unwrap_or(0);
        let phase = state.phase;
        state.ops.push((phase, OpRecord { op, level }));
    }

    /// Split the log into phases. `costs` and `levels` are indexed like
    /// [`Phase::ALL`].
    pub(crate) fn finish(self, output: &SlotVector, costs: [OpCounts; 5]) -> ExecutionTrace {
        let state = self.state.into_inner().unwrap();
        let mut phases: Vec<PhaseTrace> = Phase::ALL
            .iter()
            .zip(costs)
            .map(|(&phase, cost)| PhaseTrace {
                phase,
                ops: Vec::new(),
                cost,
                level_after: None,
            })
            .collect();
        for (phase, record) in state.ops {
            let slot = &mut phases[Phase::ALL.iter().position(|p| *p == phase).unwrap()];
            if !matches!(record.op, Op::Encode { .. }) {
                slot.level_after = Some(
                    slot.level_after
                        .map_or(record.level, |l| l.min(record.level)),
                );
            }
            slot.ops.push(record);
        }
        ExecutionTrace {
            inputs: state.inputs,
            phases,
            output: output.id(),
        }
    }
}

impl Backend for Recorder<'_> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn slot_count(&self) -> usize {
        self.inner.slot_count()
    }

    fn max_level(&self) -> u32 {
        self.inner.max_level()
    }

    fn encode(&self, values: &[f64]) -> Result<SlotVector> {
        let v = self.inner.encode(values)?;
        self.record(
            Op::Encode {
                out: v.id(),
                plain: v.clone(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn encrypt(&self, plain: &SlotVector) -> Result<SlotVector> {
        self.note_inputs(&[plain]);
        let v = self.inner.encrypt(plain)?;
        self.record(
            Op::Encrypt {
                input: plain.id(),
                out: v.id(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn decrypt(&self, x: &SlotVector) -> Vec<f64> {
        self.inner.decrypt(x)
    }

    fn rotate(&self, x: &SlotVector, k: i64) -> Result<SlotVector> {
        self.note_inputs(&[x]);
        let v = self.inner.rotate(x, k)?;
        self.record(
            Op::Rotate {
                input: x.id(),
                amount: k,
                out: v.id(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn rotate_hoisted(&self, x: &SlotVector, amounts: &[i64]) -> Result<Vec<SlotVector>> {
        self.note_inputs(&[x]);
        let vs = self.inner.rotate_hoisted(x, amounts)?;
        let refs: Vec<&SlotVector> = vs.iter().collect();
        self.record(
            Op::RotateHoisted {
                input: x.id(),
                amounts: amounts.to_vec(),
                outs: vs.iter().map(SlotVector::id).collect(),
            },
            &refs,
        );
        Ok(vs)
    }

    fn add(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector> {
        self.note_inputs(&[x, y]);
        let v = self.inner.add(x, y)?;
        self.record(
            Op::Add {
                lhs: x.id(),
                rhs: y.id(),
                out: v.id(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn mul_ct(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector> {
        self.note_inputs(&[x, y]);
        let v = self.inner.mul_ct(x, y)?;
        self.record(
            Op::MulCt {
                lhs: x.id(),
                rhs: y.id(),
                out: v.id(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn mul_pt(&self, x: &SlotVector, plain: &SlotVector) -> Result<SlotVector> {
        self.note_inputs(&[x, plain]);
        let v = self.inner.mul_pt(x, plain)?;
        self.record(
            Op::MulPt {
                lhs: x.id(),
                rhs: plain.id(),
                out: v.id(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn mask(&self, x: &SlotVector, mask: &SlotVector) -> Result<SlotVector> {
        self.note_inputs(&[x, mask]);
        let v = self.inner.mask(x, mask)?;
        self.record(
            Op::Mask {
                lhs: x.id(),
                rhs: mask.id(),
                out: v.id(),
            },
            &[&v],
        );
        Ok(v)
    }

    fn counts(&self) -> OpCounts {
        self.inner.counts()
    }
}
