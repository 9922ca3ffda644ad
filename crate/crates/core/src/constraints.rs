//! Precomputed intersections of grammar slot masks and schema rows.

use crate::grammar::{slots_for_sequence, GrammarMasks, Slot, TransitionError};
use crate::model::MaskPool;
use crate::schema::SchemaMaskTable;
use crate::tokenizer::{TokenStream, Vocab};

/// Every `grammar(slot) ∧ schema(row)` combination, addressed as
/// `slot.index() * rows + row`.
#[derive(Clone, Debug)]
pub struct Constraints {
    pub table: SchemaMaskTable,
    pub pool: MaskPool,
}

impl Constraints {
    pub fn new(vocab: &Vocab, table: SchemaMaskTable) -> Self {
        let grammar = GrammarMasks::new(vocab);
        let mut pool = MaskPool::default();
        for slot in Slot::ALL {
            for row in 0..table.len() {
                let mut m = grammar.get(slot).clone();
                m.intersect_with(table.row(row));
                pool.push(m);
            }
        }
        Self { table, pool }
    }

    pub fn mask_id(&self, slot: Slot, row: usize) -> u32 {
        (slot.index() * self.table.len() + row) as u32
    }

    /// Mask id for every position of a training stream; entry `t` governs
    /// token `t + 1`.
    pub fn sequence_mask_ids(
        &self,
        stream: &TokenStream,
        vocab: &Vocab,
    ) -> Result<Vec<u32>, TransitionError> {
        let slots = slots_for_sequence(stream, vocab)?;
        let rows = self.table.rows_for_sequence(stream);
        Ok(slots
            .into_iter()
            .zip(rows)
            .map(|(s, r)| self.mask_id(s, r))
            .collect())
    }

    /// First position whose true next token is masked out, if any.
    pub fn first_violation(
        &self,
        stream: &TokenStream,
        vocab: &Vocab,
    ) -> Result<Option<usize>, TransitionError> {
        let ids = self.sequence_mask_ids(stream, vocab)?;
        Ok((0..stream.len().saturating_sub(1))
            .find(|&t| !self.pool.sets[ids[t] as usize].contains(stream.tokens[t + 1] as usize)))
    }
}
