//! A cKPCA embedding that is edited one message at a time.
//!
//! Targets and emitted coordinates live in a unit frame fixed when the session
//! starts (the unconstrained KPCA layout scaled to a bounding box of side 2),
//! so a dragged point keeps a stable meaning across updates.

use serde::{Deserialize, Serialize};

use super::{CkpcaState, ConstraintSet, ControlPoint, EmbedError, Embedding, Frame, KernelSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Must,
    Cannot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthTarget {
    Control,
    Must,
    Cannot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Interaction {
    AddControl { index: usize, x: f64, y: f64 },
    MoveControl { index: usize, x: f64, y: f64 },
    RemoveControl { index: usize },
    AddLink { kind: LinkKind, i: usize, j: usize },
    RemoveLink { kind: LinkKind, i: usize, j: usize },
    SetStrength { target: StrengthTarget, value: f64 },
}

impl Interaction {
    /// Whether the message changes the constraint form (and so needs a
    /// refactorization) rather than just a control target.
    pub fn changes_topology(&self) -> bool {
        !matches!(self, Interaction::MoveControl { .. })
    }
}

#[derive(Debug, Clone)]
pub struct InteractiveSession {
    state: CkpcaState,
    frame: Frame,
    /// User-facing constraints, targets in unit coordinates.
    constraints: ConstraintSet,
    embedding: Embedding,
}

fn same_pair(a: [usize; 2], i: usize, j: usize) -> bool {
    (a[0] == i && a[1] == j) || (a[0] == j && a[1] == i)
}

impl InteractiveSession {
    pub fn new(spectrum: KernelSpectrum, constraints: ConstraintSet) -> Result<Self, EmbedError> {
        let frame = Frame::fit(&spectrum.embedding()?.coords);
        let state = CkpcaState::new(spectrum, to_raw(&frame, &constraints))?;
        let mut session = InteractiveSession {
            state,
            frame,
            constraints,
            embedding: Embedding::new(Vec::new(), super::EmbedMethod::Ckpca, Default::default()),
        };
        session.embedding = session.emit(0);
        Ok(session)
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn version(&self) -> u64 {
        self.embedding.version
    }

    pub fn n(&self) -> usize {
        self.state.n()
    }

    fn emit(&self, version: u64) -> Embedding {
        let mut e = self.state.embedding();
        e.coords = self.frame.to_unit_all(&e.coords);
        e.version = version;
        e
    }

    /// Applies one message and re-solves. On error nothing changes.
    pub fn apply(&mut self, msg: &Interaction) -> Result<&Embedding, EmbedError> {
        let n = self.n();
        let check = |idx: usize| {
            if idx < n {
                Ok(())
            } else {
                Err(EmbedError::InvalidConstraints(format!("index {idx} out of range for {n} points")))
            }
        };
        if let Interaction::MoveControl { index, x, y } = *msg {
            if self.constraints.control(index).is_none() {
                return Err(EmbedError::UnknownControl(index));
            }
            let raw = self.frame.from_unit([x, y]);
            self.state.move_control(index, raw[0], raw[1])?;
            for cp in &mut self.constraints.control_points {
                if cp.index == index {
                    cp.x = x;
                    cp.y = y;
                }
            }
            self.embedding = self.emit(self.embedding.version + 1);
            return Ok(&self.embedding);
        }

        let mut next = self.constraints.clone();
        match *msg {
            Interaction::AddControl { index, x, y } => {
                check(index)?;
                match next.control_points.iter_mut().find(|c| c.index == index) {
                    Some(cp) => {
                        cp.x = x;
                        cp.y = y;
                    }
                    None => next.control_points.push(ControlPoint { index, x, y }),
                }
            }
            Interaction::RemoveControl { index } => {
                let before = next.control_points.len();
                next.control_points.retain(|c| c.index != index);
                if next.control_points.len() == before {
                    return Err(EmbedError::UnknownControl(index));
                }
            }
            Interaction::AddLink { kind, i, j } => {
                check(i)?;
                check(j)?;
                let links = match kind {
                    LinkKind::Must => &mut next.must_links,
                    LinkKind::Cannot => &mut next.cannot_links,
                };
                if !links.iter().any(|&l| same_pair(l, i, j)) {
                    links.push([i, j]);
                }
            }
            Interaction::RemoveLink { kind, i, j } => {
                let links = match kind {
                    LinkKind::Must => &mut next.must_links,
                    LinkKind::Cannot => &mut next.cannot_links,
                };
                let before = links.len();
                links.retain(|&l| !same_pair(l, i, j));
                if links.len() == before {
                    return Err(EmbedError::InvalidConstraints(format!("no {kind:?} link ({i}, {j})").to_lowercase()));
                }
            }
            Interaction::SetStrength { target, value } => {
                let slot = match target {
                    StrengthTarget::Control => &mut next.mu_cp,
                    StrengthTarget::Must => &mut next.mu_ml,
                    StrengthTarget::Cannot => &mut next.mu_cl,
                };
                *slot = value;
            }
            Interaction::MoveControl { .. } => unreachable!("handled above"),
        }
        next.validate(n)?;
        self.state.set_constraints(to_raw(&self.frame, &next))?;
        self.constraints = next;
        self.embedding = self.emit(self.embedding.version + 1);
        Ok(&self.embedding)
    }

    /// Replaces every constraint at once (unit coordinates).
    pub fn set_constraints(&mut self, constraints: ConstraintSet) -> Result<&Embedding, EmbedError> {
        self.state.set_constraints(to_raw(&self.frame, &constraints))?;
        self.constraints = constraints;
        self.embedding = self.emit(self.embedding.version + 1);
        Ok(&self.embedding)
    }
}

fn to_raw(frame: &Frame, unit: &ConstraintSet) -> ConstraintSet {
    let mut raw = unit.clone();
    for cp in &mut raw.control_points {
        let p = frame.from_unit([cp.x, cp.y]);
        cp.x = p[0];
        cp.y = p[1];
    }
    raw
}
