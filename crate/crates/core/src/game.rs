//! Connect Four rules and board representation.
//!
//! Cells hold `+1` (player 1), `-1` (player 2) or `0` (empty), matching the
//! sign conventions used by the opponent heuristic and the value network.
//! Row 0 is the bottom row: a dropped disc lands on the lowest empty cell of
//! its column.

use std::fmt;

use crate::Error;

pub const ROWS: usize = 6;
pub const COLS: usize = 7;
pub const CELLS: usize = ROWS * COLS;

/// Disc owner: `+1` for player 1, `-1` for player 2.
pub type Player = i8;

/// A column index in `[0, 6]`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Action(u8);

impl Action {
    pub fn new(col: usize) -> Option<Self> {
        (col < COLS).then_some(Action(col as u8))
    }

    pub fn col(self) -> usize {
        self.0 as usize
    }

    /// All seven columns, left to right.
    pub fn all() -> impl Iterator<Item = Action> {
        (0..COLS as u8).map(Action)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of actions packed one bit per column.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub fn empty() -> Self {
        ActionSet(0)
    }

    /// Bits above column 6 are dropped.
    pub fn from_mask(mask: u8) -> Self {
        ActionSet(mask & 0x7f)
    }

    pub fn from_actions<I: IntoIterator<Item = Action>>(actions: I) -> Self {
        let mut s = ActionSet(0);
        for a in actions {
            s.insert(a);
        }
        s
    }

    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.0;
    }

    pub fn remove(&mut self, a: Action) {
        self.0 &= !(1 << a.0);
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.0) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersect(self, other: Self) -> Self {
        ActionSet(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        ActionSet(self.0 | other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        ActionSet(self.0 & !other.0)
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        (0..COLS as u8)
            .filter(move |c| self.0 & (1 << c) != 0)
            .map(Action)
    }
}

impl fmt::Debug for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|a| a.col())).finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GameOutcome {
    Win1,
    Win2,
    Draw,
    Ongoing,
}

impl GameOutcome {
    pub fn is_terminal(self) -> bool {
        !matches!(self, GameOutcome::Ongoing)
    }

    pub fn winner(self) -> Option<Player> {
        match self {
            GameOutcome::Win1 => Some(1),
            GameOutcome::Win2 => Some(-1),
            _ => None,
        }
    }
}

/// Reward seen from `perspective`: 1 for a win, 0.5 for a draw, -1 for a
/// loss and 0 while the game is still running.
pub fn reward(outcome: GameOutcome, perspective: Player) -> f64 {
    match outcome.winner() {
        Some(w) if w == perspective => 1.0,
        Some(_) => -1.0,
        None => {
            if outcome == GameOutcome::Draw {
                0.5
            } else {
                0.0
            }
        }
    }
}

/// One agent step: the position faced, the move, the board right after the
/// move (before any reply), and the position the agent faces next. For the
/// closing step of a game `next_state` equals the terminal board and
/// `terminal` is set.
#[derive(Clone, Copy, Debug)]
pub struct Transition {
    pub state: BoardState,
    pub action: Action,
    pub afterstate: BoardState,
    pub next_state: BoardState,
    pub reward: f64,
    pub terminal: bool,
}

/// Injective digest of a board, used as the flag-table key.
///
/// Each column packs a sentinel bit followed by one bit per disc bottom-up
/// (1 for player 1), seven bits per column, 49 bits total. The sentinel
/// recovers the column height, the bits below it the disc owners, so equal
/// keys imply equal boards.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct StateKey(u64);

impl StateKey {
    pub fn as_u64(self) -> u64 {
        self.0
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:013x}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoardState {
    cells: [i8; CELLS],
}

impl Default for BoardState {
    fn default() -> Self {
        BoardState::empty()
    }
}

impl BoardState {
    pub fn empty() -> Self {
        BoardState { cells: [0; CELLS] }
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.cells[row * COLS + col]
    }

    fn set(&mut self, row: usize, col: usize, v: i8) {
        self.cells[row * COLS + col] = v;
    }

    /// Number of discs on the board.
    pub fn ply(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn is_full(&self) -> bool {
        (0..COLS).all(|c| self.get(ROWS - 1, c) != 0)
    }

    /// Columns that still have room, in ascending order.
    pub fn legal_actions(&self) -> Vec<Action> {
        (0..COLS)
            .filter(|&c| self.get(ROWS - 1, c) == 0)
            .map(|c| Action(c as u8))
            .collect()
    }

    pub fn legal_set(&self) -> ActionSet {
        ActionSet::from_actions(self.legal_actions())
    }

    /// Drops a disc for `player`, returning the new board. The move count is
    /// not checked on purpose: tests and search probes construct positions
    /// by repeated drops for one side.
    pub fn apply(&self, action: Action, player: Player) -> Result<Self, Error> {
        debug_assert!(player == 1 || player == -1);
        let c = action.col();
        for r in 0..ROWS {
            if self.get(r, c) == 0 {
                let mut next = *self;
                next.set(r, c, player);
                return Ok(next);
            }
        }
        Err(Error::IllegalMove { column: c })
    }

    /// Win, draw or still running. Wins are four equal discs in a row along
    /// any of the four directions; a full board with no line is a draw.
    pub fn outcome(&self) -> GameOutcome {
        // sum of four cells is +-4 exactly when one side owns all four
        for r in 0..ROWS {
            for c in 0..COLS - 3 {
                match self.line_sum(r, c, 0, 1) {
                    4 => return GameOutcome::Win1,
                    -4 => return GameOutcome::Win2,
                    _ => {}
                }
            }
        }
        for r in 0..ROWS - 3 {
            for c in 0..COLS {
                match self.line_sum(r, c, 1, 0) {
                    4 => return GameOutcome::Win1,
                    -4 => return GameOutcome::Win2,
                    _ => {}
                }
            }
        }
        for r in 0..ROWS - 3 {
            for c in 0..COLS - 3 {
                match self.line_sum(r, c, 1, 1) {
                    4 => return GameOutcome::Win1,
                    -4 => return GameOutcome::Win2,
                    _ => {}
                }
            }
        }
        for r in 0..ROWS - 3 {
            for c in 3..COLS {
                match self.line_sum(r, c, 1, -1) {
                    4 => return GameOutcome::Win1,
                    -4 => return GameOutcome::Win2,
                    _ => {}
                }
            }
        }
        if self.is_full() {
            GameOutcome::Draw
        } else {
            GameOutcome::Ongoing
        }
    }

    fn line_sum(&self, r: usize, c: usize, dr: isize, dc: isize) -> i32 {
        let mut s = 0i32;
        for k in 0..4 {
            let rr = (r as isize + dr * k) as usize;
            let cc = (c as isize + dc * k) as usize;
            s += self.get(rr, cc) as i32;
        }
        s
    }

    pub fn key(&self) -> StateKey {
        let mut k = 0u64;
        for c in 0..COLS {
            let mut code = 1u64;
            for r in 0..ROWS {
                match self.get(r, c) {
                    0 => break,
                    v => code = (code << 1) | (v == 1) as u64,
                }
            }
            k |= code << (7 * c);
        }
        StateKey(k)
    }

    /// Renders the board as six lines of seven characters, top row first:
    /// `.` empty, `X` player 1, `O` player 2. Ends with a newline.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((COLS + 1) * ROWS);
        for r in (0..ROWS).rev() {
            for c in 0..COLS {
                s.push(match self.get(r, c) {
                    0 => '.',
                    1 => 'X',
                    _ => 'O',
                });
            }
            s.push('\n');
        }
        s
    }

    /// Parses the text format produced by [`BoardState::to_text`]. The
    /// trailing newline is optional. Floating discs are rejected.
    pub fn from_text(text: &str) -> Result<Self, Error> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != ROWS {
            return Err(Error::BoardText(format!(
                "expected {} lines, got {}",
                ROWS,
                lines.len()
            )));
        }
        let mut board = BoardState::empty();
        for (i, line) in lines.iter().enumerate() {
            let row = ROWS - 1 - i;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != COLS {
                return Err(Error::BoardText(format!(
                    "line {} has {} characters, expected {}",
                    i + 1,
                    chars.len(),
                    COLS
                )));
            }
            for (col, ch) in chars.into_iter().enumerate() {
                let v = match ch {
                    '.' => 0,
                    'X' => 1,
                    'O' => -1,
                    other => {
                        return Err(Error::BoardText(format!(
                            "unexpected character {:?} on line {}",
                            other,
                            i + 1
                        )))
                    }
                };
                board.set(row, col, v);
            }
        }
        for c in 0..COLS {
            let mut seen_empty = false;
            for r in 0..ROWS {
                match board.get(r, c) {
                    0 => seen_empty = true,
                    _ if seen_empty => {
                        return Err(Error::BoardText(format!(
                            "column {} has a floating disc",
                            c
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(board)
    }
}

impl fmt::Debug for BoardState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoardState(\n{})", self.to_text())
    }
}

/// Plays up to `plies` random legal moves from the empty board, players
/// alternating with player 1 first, never entering a terminal position.
/// Returns the position and the player to move. Useful for search and
/// network tests that need arbitrary mid-game boards.
pub fn random_position<R: rand::Rng>(rng: &mut R, plies: usize) -> (BoardState, Player) {
    let mut board = BoardState::empty();
    let mut player: Player = 1;
    for _ in 0..plies {
        let keep: Vec<Action> = board
            .legal_actions()
            .into_iter()
            .filter(|&a| board.apply(a, player).unwrap().outcome() == GameOutcome::Ongoing)
            .collect();
        if keep.is_empty() {
            break;
        }
        board = board
            .apply(keep[rng.gen_range(0..keep.len())], player)
            .unwrap();
        player = -player;
    }
    (board, player)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn col(c: usize) -> Action {
        Action::new(c).unwrap()
    }

    /// Independent enumeration of every four-in-a-row line as cell indices,
    /// written directly from the board geometry.
    fn all_lines() -> Vec<[(usize, usize); 4]> {
        let mut lines = Vec::new();
        for r in 0..ROWS {
            for c in 0..COLS {
                for (dr, dc) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
                    let er = r as isize + 3 * dr;
                    let ec = c as isize + 3 * dc;
                    if er < 0 || er >= ROWS as isize || ec < 0 || ec >= COLS as isize {
                        continue;
                    }
                    let mut line = [(0usize, 0usize); 4];
                    for (k, cell) in line.iter_mut().enumerate() {
                        cell.0 = (r as isize + dr * k as isize) as usize;
                        cell.1 = (c as isize + dc * k as isize) as usize;
                    }
                    lines.push(line);
                }
            }
        }
        lines
    }

    #[test]
    fn line_enumeration_is_complete() {
        assert_eq!(all_lines().len(), 69);
    }

    #[test]
    fn empty_board_has_all_columns_legal() {
        let b = BoardState::empty();
        let legal = b.legal_actions();
        assert_eq!(legal.len(), 7);
        assert_eq!(legal, Action::all().collect::<Vec<_>>());
        assert_eq!(b.outcome(), GameOutcome::Ongoing);
    }

    #[test]
    fn full_column_is_excluded_from_legal_actions() {
        let mut b = BoardState::empty();
        for _ in 0..3 {
            b = b.apply(col(3), 1).unwrap();
            b = b.apply(col(3), -1).unwrap();
        }
        assert_eq!(b.get(5, 3), -1);
        let legal = b.legal_actions();
        assert_eq!(legal.len(), 6);
        assert!(!legal.contains(&col(3)));
    }

    #[test]
    fn apply_lands_on_lowest_empty_cell() {
        let b = BoardState::empty().apply(col(2), 1).unwrap();
        assert_eq!(b.get(0, 2), 1);
        let b = b.apply(col(2), -1).unwrap();
        assert_eq!(b.get(0, 2), 1);
        assert_eq!(b.get(1, 2), -1);
        assert_eq!(b.ply(), 2);
    }

    #[test]
    fn apply_to_full_column_is_an_error() {
        let mut b = BoardState::empty();
        for i in 0..ROWS {
            b = b.apply(col(6), if i % 2 == 0 { 1 } else { -1 }).unwrap();
        }
        match b.apply(col(6), 1) {
            Err(Error::IllegalMove { column }) => assert_eq!(column, 6),
            other => panic!("expected IllegalMove, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn vertical_stack_of_four_wins() {
        let mut b = BoardState::empty();
        for _ in 0..4 {
            b = b.apply(col(2), 1).unwrap();
        }
        assert_eq!(b.outcome(), GameOutcome::Win1);
        assert_eq!(reward(b.outcome(), 1), 1.0);
        assert_eq!(reward(b.outcome(), -1), -1.0);
    }

    #[test]
    fn horizontal_and_diagonal_wins_are_detected() {
        let mut b = BoardState::empty();
        for c in 1..5 {
            b = b.apply(col(c), -1).unwrap();
        }
        assert_eq!(b.outcome(), GameOutcome::Win2);

        // rising diagonal for player 1 from (0,0) to (3,3)
        let text = "\
.......
.......
...X...
..XO...
.XOO...
XOXO...
";
        let b = BoardState::from_text(text).unwrap();
        assert_eq!(b.outcome(), GameOutcome::Win1);
    }

    /// Fills the board cell by cell, columns bottom-up, backtracking whenever
    /// a completed line appears. The result is a full board with no four in
    /// a row, checked here against the independent line enumeration.
    fn fill_drawn_board() -> BoardState {
        fn rec(b: &mut BoardState, idx: usize, counts: &mut [usize; 2]) -> bool {
            if idx == CELLS {
                return true;
            }
            let (c, r) = (idx / ROWS, idx % ROWS);
            for (ci, v) in [(0usize, 1i8), (1, -1)] {
                if counts[ci] == CELLS / 2 {
                    continue;
                }
                b.set(r, c, v);
                counts[ci] += 1;
                let line_done = (0..ROWS).any(|rr| (0..COLS).any(|cc| completes_line(b, rr, cc)));
                if !line_done && rec(b, idx + 1, counts) {
                    return true;
                }
                counts[ci] -= 1;
                b.set(r, c, 0);
            }
            false
        }
        fn completes_line(b: &BoardState, r: usize, c: usize) -> bool {
            for (dr, dc) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
                let er = r as isize + 3 * dr;
                let ec = c as isize + 3 * dc;
                if er < 0 || er >= ROWS as isize || ec < 0 || ec >= COLS as isize {
                    continue;
                }
                let mut s = 0i32;
                for k in 0..4 {
                    s += b.get(
                        (r as isize + dr * k) as usize,
                        (c as isize + dc * k) as usize,
                    ) as i32;
                }
                if s.abs() == 4 {
                    return true;
                }
            }
            false
        }
        let mut b = BoardState::empty();
        let mut counts = [0usize; 2];
        assert!(rec(&mut b, 0, &mut counts), "no drawn filling found");
        b
    }

    #[test]
    fn full_board_without_a_line_is_a_draw() {
        let b = fill_drawn_board();
        assert!(b.is_full());
        for line in all_lines() {
            let s: i32 = line.iter().map(|&(r, c)| b.get(r, c) as i32).sum();
            assert_ne!(s.abs(), 4, "filler left a completed line");
        }
        assert_eq!(b.outcome(), GameOutcome::Draw);
        assert_eq!(reward(b.outcome(), 1), 0.5);
        assert_eq!(reward(b.outcome(), -1), 0.5);
    }

    #[test]
    fn reward_is_zero_while_running() {
        assert_eq!(reward(GameOutcome::Ongoing, 1), 0.0);
        assert_eq!(reward(GameOutcome::Ongoing, -1), 0.0);
        assert_eq!(reward(GameOutcome::Win2, -1), 1.0);
        assert_eq!(reward(GameOutcome::Win2, 1), -1.0);
    }

    #[test]
    fn state_key_is_stable_and_separates_boards() {
        let b1 = BoardState::empty().apply(col(0), 1).unwrap();
        let b2 = BoardState::empty().apply(col(0), -1).unwrap();
        let b3 = BoardState::empty().apply(col(1), 1).unwrap();
        assert_eq!(b1.key(), b1.key());
        assert_eq!(b1.key(), { b1 }.key());
        assert_ne!(b1.key(), b2.key());
        assert_ne!(b1.key(), b3.key());
        assert_ne!(b2.key(), b3.key());
        assert_eq!(BoardState::empty().key().as_u64() >> 49, 0);
    }

    #[test]
    fn state_keys_are_injective_over_sampled_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut seen: HashMap<StateKey, BoardState> = HashMap::new();
        for _ in 0..5_000 {
            let plies = rng.gen_range(0..=30);
            let (b, _) = random_position(&mut rng, plies);
            if let Some(prev) = seen.insert(b.key(), b) {
                assert_eq!(prev, b, "key collision between distinct boards");
            }
        }
        assert!(seen.len() > 1_000);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let text = "\
.......
.......
.......
...O...
...X...
..XO...
";
        let b = BoardState::from_text(text).unwrap();
        assert_eq!(b.to_text(), text);
        assert_eq!(b.get(0, 2), 1);
        assert_eq!(b.get(0, 3), -1);
        assert_eq!(b.get(1, 3), 1);
        assert_eq!(b.get(2, 3), -1);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(BoardState::from_text("...\n").is_err());
        let bad_char = ".......\n.......\n.......\n.......\n.......\n..?....\n";
        assert!(BoardState::from_text(bad_char).is_err());
        let floating = "\
.......
.......
...X...
.......
.......
.......
";
        assert!(BoardState::from_text(floating).is_err());
    }

    #[test]
    fn random_playouts_preserve_board_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let mut b = BoardState::empty();
            let mut player: Player = 1;
            let mut plies = 0usize;
            loop {
                let legal = b.legal_actions();
                if b.outcome().is_terminal() {
                    break;
                }
                assert!(!legal.is_empty());
                let a = legal[rng.gen_range(0..legal.len())];
                b = b.apply(a, player).unwrap();
                player = -player;
                plies += 1;
                assert!(plies <= CELLS);

                // gravity: nothing occupied above an empty cell
                for c in 0..COLS {
                    let mut seen_empty = false;
                    for r in 0..ROWS {
                        match b.get(r, c) {
                            0 => seen_empty = true,
                            _ => assert!(!seen_empty),
                        }
                    }
                }
                // alternation keeps the counts balanced
                let p1 = b.cells.iter().filter(|&&v| v == 1).count();
                let p2 = b.cells.iter().filter(|&&v| v == -1).count();
                assert!(p1 == p2 || p1 == p2 + 1);
            }
            assert_eq!(b.ply(), plies);
            // outcome is a pure function of the final board
            assert_eq!(b.outcome(), b.outcome());
        }
    }

    #[test]
    fn action_set_operations() {
        let mut s = ActionSet::empty();
        assert!(s.is_empty());
        s.insert(col(0));
        s.insert(col(5));
        assert_eq!(s.len(), 2);
        assert!(s.contains(col(0)));
        assert!(!s.contains(col(1)));
        s.remove(col(0));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![col(5)]);
        let t = ActionSet::from_actions([col(4), col(5)]);
        assert_eq!(s.intersect(t).len(), 1);
        assert_eq!(s.union(t).len(), 2);
        assert_eq!(t.difference(s).iter().collect::<Vec<_>>(), vec![col(4)]);
        assert_eq!(ActionSet::from_mask(0xff).len(), 7);
    }

    proptest! {
        #[test]
        fn prop_text_round_trip(moves in proptest::collection::vec(0usize..7, 0..42)) {
            let mut b = BoardState::empty();
            let mut player: Player = 1;
            for m in moves {
                let a = Action::new(m).unwrap();
                if b.outcome().is_terminal() {
                    break;
                }
                if let Ok(next) = b.apply(a, player) {
                    b = next;
                    player = -player;
                }
            }
            let text = b.to_text();
            let back = BoardState::from_text(&text).unwrap();
            prop_assert_eq!(back, b);
            prop_assert_eq!(back.to_text(), text);
        }

        #[test]
        fn prop_legal_actions_match_top_row(moves in proptest::collection::vec(0usize..7, 0..60)) {
            let mut b = BoardState::empty();
            let mut player: Player = 1;
            for m in moves {
                if b.outcome().is_terminal() {
                    break;
                }
                if let Ok(next) = b.apply(Action::new(m).unwrap(), player) {
                    b = next;
                    player = -player;
                }
            }
            for a in Action::all() {
                let legal = b.legal_actions().contains(&a);
                prop_assert_eq!(legal, b.get(ROWS - 1, a.col()) == 0);
                prop_assert_eq!(legal, b.legal_set().contains(a));
            }
        }
    }
}
