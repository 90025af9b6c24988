//! Randomized negamax opponent with alpha-beta pruning.
//!
//! The opponent searches to a fixed depth with a 4x4-window heuristic at the
//! leaves. At non-critical positions it plays a uniformly random move with
//! probability `omega`, preferring moves with positive score, which makes it
//! beatable while still punishing tactical mistakes.

use rand::Rng;

use crate::game::{Action, BoardState, GameOutcome, Player, COLS, ROWS};
use crate::Error;

const INF: i32 = 1 << 30;

#[derive(Clone, Copy, Debug)]
pub struct NegamaxConfig {
    /// Search depth in plies, at least 1.
    pub depth: u32,
    /// Probability of the randomized branch at non-critical positions.
    pub omega: f64,
    /// Score magnitude of an immediate win; terminal scores at ply k are
    /// `win_score - k` so earlier wins rank higher.
    pub win_score: i32,
}

impl Default for NegamaxConfig {
    fn default() -> Self {
        NegamaxConfig {
            depth: 2,
            omega: 0.3,
            win_score: 10_000,
        }
    }
}

impl NegamaxConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.depth == 0 {
            return Err(Error::Config("search depth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config(format!(
                "omega must be in [0, 1], got {}",
                self.omega
            )));
        }
        if self.win_score <= 0 {
            return Err(Error::Config("win_score must be positive".into()));
        }
        Ok(())
    }
}

/// Root evaluation: every legal move with its exact search score, kept in
/// ascending column order.
#[derive(Clone, Debug)]
pub struct ScoredMoves {
    scores: Vec<(Action, i32)>,
}

impl ScoredMoves {
    pub fn scores(&self) -> &[(Action, i32)] {
        &self.scores
    }

    pub fn best_score(&self) -> i32 {
        self.scores.iter().map(|&(_, s)| s).max().expect("nonempty")
    }

    /// Lowest column among the best-scoring moves.
    pub fn best_action(&self) -> Action {
        let best = self.best_score();
        self.scores
            .iter()
            .find(|&&(_, s)| s == best)
            .map(|&(a, _)| a)
            .expect("nonempty")
    }

    pub fn score_of(&self, a: Action) -> Option<i32> {
        self.scores.iter().find(|&&(b, _)| b == a).map(|&(_, s)| s)
    }
}

/// Static evaluation from `player`'s point of view.
///
/// The board is covered by twelve 4x4 windows (anchors rows 0..2, columns
/// 0..3). In each window the ten line sums (four rows, four columns, both
/// diagonals) are taken over cell values; the window adds `2 * h_max` when
/// the largest sum exceeds 1 and `2 * h_min` when the smallest is below -1.
/// The total is negated for player 2, so the function is antisymmetric.
pub fn heuristic_eval(board: &BoardState, player: Player) -> i32 {
    let mut total = 0i32;
    for r0 in 0..ROWS - 3 {
        for c0 in 0..COLS - 3 {
            let mut h_max = i32::MIN;
            let mut h_min = i32::MAX;
            let mut track = |s: i32| {
                h_max = h_max.max(s);
                h_min = h_min.min(s);
            };
            for i in 0..4 {
                let mut row = 0i32;
                let mut col = 0i32;
                for j in 0..4 {
                    row += board.get(r0 + i, c0 + j) as i32;
                    col += board.get(r0 + j, c0 + i) as i32;
                }
                track(row);
                track(col);
            }
            let mut diag = 0i32;
            let mut anti = 0i32;
            for j in 0..4 {
                diag += board.get(r0 + j, c0 + j) as i32;
                anti += board.get(r0 + j, c0 + 3 - j) as i32;
            }
            track(diag);
            track(anti);
            if h_max > 1 {
                total += 2 * h_max;
            }
            if h_min < -1 {
                total += 2 * h_min;
            }
        }
    }
    if player == -1 {
        -total
    } else {
        total
    }
}

fn value(
    node: &BoardState,
    depth: u32,
    ply: i32,
    mut alpha: i32,
    beta: i32,
    to_move: Player,
    win_score: i32,
) -> i32 {
    match node.outcome() {
        GameOutcome::Ongoing => {}
        GameOutcome::Draw => return 0,
        out => {
            let s = win_score - ply;
            return if out.winner() == Some(to_move) { s } else { -s };
        }
    }
    if depth == 0 {
        return heuristic_eval(node, to_move);
    }
    let mut best = -INF;
    for a in node.legal_actions() {
        let child = node.apply(a, to_move).expect("legal move");
        let v = -value(
            &child,
            depth - 1,
            ply + 1,
            -beta,
            -alpha,
            -to_move,
            win_score,
        );
        best = best.max(v);
        alpha = alpha.max(v);
        if alpha >= beta {
            break;
        }
    }
    best
}

/// Scores every legal move for `player` by negamax to `cfg.depth` plies.
/// Each root move gets a fresh full window, so root scores are exact minimax
/// values even though inner nodes prune.
pub fn root_scores(
    board: &BoardState,
    player: Player,
    cfg: &NegamaxConfig,
) -> Result<ScoredMoves, Error> {
    assert!(cfg.depth >= 1, "search depth must be at least 1");
    if board.outcome().is_terminal() {
        return Err(Error::NoLegalMoves);
    }
    let mut scores = Vec::with_capacity(COLS);
    for a in board.legal_actions() {
        let child = board.apply(a, player)?;
        let s = -value(&child, cfg.depth - 1, 1, -INF, INF, -player, cfg.win_score);
        scores.push((a, s));
    }
    Ok(ScoredMoves { scores })
}

/// Picks the opponent move. A position is critical when the best score has
/// terminal magnitude (`|best| >= win_score - depth`, a forced win or loss
/// within the horizon); the randomized branch is skipped there. Otherwise,
/// with probability `omega` the move is drawn uniformly among moves with
/// positive score, falling back to all legal moves when none is positive.
pub fn select_move<R: Rng>(
    board: &BoardState,
    player: Player,
    cfg: &NegamaxConfig,
    rng: &mut R,
) -> Result<Action, Error> {
    let sm = root_scores(board, player, cfg)?;
    let critical = sm.best_score().abs() >= cfg.win_score - cfg.depth as i32;
    if !critical && rng.gen_bool(cfg.omega) {
        let positive: Vec<Action> = sm
            .scores()
            .iter()
            .filter(|&&(_, s)| s > 0)
            .map(|&(a, _)| a)
            .collect();
        let pool = if positive.is_empty() {
            sm.scores().iter().map(|&(a, _)| a).collect()
        } else {
            positive
        };
        return Ok(pool[rng.gen_range(0..pool.len())]);
    }
    Ok(sm.best_action())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::random_position;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(c: usize) -> Action {
        Action::new(c).unwrap()
    }

    /// Plain minimax without pruning, full width, same leaf heuristic.
    /// Kept deliberately separate from the pruned implementation.
    fn minimax(node: &BoardState, depth: u32, ply: i32, to_move: Player, win_score: i32) -> i32 {
        match node.outcome() {
            GameOutcome::Ongoing => {}
            GameOutcome::Draw => return 0,
            out => {
                let s = win_score - ply;
                return if out.winner() == Some(to_move) { s } else { -s };
            }
        }
        if depth == 0 {
            return heuristic_eval(node, to_move);
        }
        node.legal_actions()
            .into_iter()
            .map(|a| {
                let child = node.apply(a, to_move).unwrap();
                -minimax(&child, depth - 1, ply + 1, -to_move, win_score)
            })
            .max()
            .unwrap()
    }

    fn minimax_root(board: &BoardState, player: Player, cfg: &NegamaxConfig) -> Vec<(Action, i32)> {
        board
            .legal_actions()
            .into_iter()
            .map(|a| {
                let child = board.apply(a, player).unwrap();
                (
                    a,
                    -minimax(&child, cfg.depth - 1, 1, -player, cfg.win_score),
                )
            })
            .collect()
    }

    #[test]
    fn empty_board_evaluates_to_zero() {
        let b = BoardState::empty();
        assert_eq!(heuristic_eval(&b, 1), 0);
        assert_eq!(heuristic_eval(&b, -1), 0);
    }

    #[test]
    fn three_in_bottom_row_evaluates_to_twenty() {
        // X on (0,2) (0,3) (0,4). Row sums of 3 appear in windows anchored
        // at columns 1 and 2 (+6 each); sums of 2 in windows at columns 0
        // and 3 (+4 each); windows anchored on rows 1 and 2 see nothing.
        let b = BoardState::from_text(
            "\
.......
.......
.......
.......
.......
..XXX..
",
        )
        .unwrap();
        assert_eq!(heuristic_eval(&b, 1), 20);
        assert_eq!(heuristic_eval(&b, -1), -20);
    }

    #[test]
    fn stacked_pair_counts_through_its_column_line() {
        // O on (0,0) and (1,0): the only window containing both rows of
        // column 0 is anchored at (0,0), column sum -2, contribution -4.
        let b = BoardState::from_text(
            "\
.......
.......
.......
.......
O......
O......
",
        )
        .unwrap();
        assert_eq!(heuristic_eval(&b, 1), -4);
        assert_eq!(heuristic_eval(&b, -1), 4);
    }

    #[test]
    fn heuristic_is_antisymmetric_on_random_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let plies = rng.gen_range(0..=28);
            let (b, _) = random_position(&mut rng, plies);
            assert_eq!(heuristic_eval(&b, 1), -heuristic_eval(&b, -1));
        }
    }

    #[test]
    fn immediate_win_scores_win_score_minus_one() {
        let b = BoardState::from_text(
            "\
.......
.......
.......
..X...O
..X..OO
..X..OO
",
        )
        .unwrap();
        let cfg = NegamaxConfig::default();
        let sm = root_scores(&b, 1, &cfg).unwrap();
        assert_eq!(sm.score_of(col(2)), Some(cfg.win_score - 1));
        assert_eq!(sm.best_action(), col(2));
        for &(a, s) in sm.scores() {
            if a != col(2) {
                assert!(s < cfg.win_score - 1);
            }
        }
    }

    #[test]
    fn critical_positions_never_take_the_random_branch() {
        let b = BoardState::from_text(
            "\
.......
.......
.......
..X...O
..X..OO
..X..OO
",
        )
        .unwrap();
        let cfg = NegamaxConfig {
            omega: 1.0,
            ..NegamaxConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(select_move(&b, 1, &cfg, &mut rng).unwrap(), col(2));
        }
    }

    #[test]
    fn blocking_an_open_three_scores_strictly_higher() {
        // O threatens column 1 (three stacked); X to move at depth 2.
        let b = BoardState::from_text(
            "\
.......
.......
.......
.O.....
.O..X..
.O..X.X
",
        )
        .unwrap();
        let cfg = NegamaxConfig::default();
        let sm = root_scores(&b, 1, &cfg).unwrap();
        let blocking = sm.score_of(col(1)).unwrap();
        for &(a, s) in sm.scores() {
            if a != col(1) {
                assert!(
                    blocking > s,
                    "blocking {} should beat {} ({})",
                    blocking,
                    a,
                    s
                );
            }
        }
        let oracle = minimax_root(&b, 1, &cfg);
        assert_eq!(sm.scores(), &oracle[..]);
    }

    #[test]
    fn pruned_search_matches_plain_minimax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg2 = NegamaxConfig::default();
        let cfg3 = NegamaxConfig {
            depth: 3,
            ..NegamaxConfig::default()
        };
        for i in 0..250 {
            let plies = rng.gen_range(0..=32);
            let (b, to_move) = random_position(&mut rng, plies);
            let cfg = if i % 5 == 0 { &cfg3 } else { &cfg2 };
            let sm = root_scores(&b, to_move, cfg).unwrap();
            let oracle = minimax_root(&b, to_move, cfg);
            assert_eq!(sm.scores(), &oracle[..], "board:\n{}", b.to_text());
        }
    }

    #[test]
    fn omega_zero_is_deterministic_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = NegamaxConfig {
            omega: 0.0,
            ..NegamaxConfig::default()
        };
        for _ in 0..100 {
            let plies = rng.gen_range(0..=24);
            let (b, to_move) = random_position(&mut rng, plies);
            let sm = root_scores(&b, to_move, &cfg).unwrap();
            let a1 = select_move(&b, to_move, &cfg, &mut rng).unwrap();
            let a2 = select_move(&b, to_move, &cfg, &mut rng).unwrap();
            assert_eq!(a1, sm.best_action());
            assert_eq!(a2, sm.best_action());
        }
    }

    #[test]
    fn no_positive_scores_draws_uniformly_over_all_columns() {
        // on the empty board every depth-2 leaf has single discs only, so
        // all root scores are 0 and the random branch sees no positives
        let b = BoardState::empty();
        let cfg = NegamaxConfig {
            omega: 1.0,
            ..NegamaxConfig::default()
        };
        let sm = root_scores(&b, 1, &cfg).unwrap();
        assert!(sm.scores().iter().all(|&(_, s)| s == 0));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 14_000usize;
        let mut counts = [0usize; 7];
        for _ in 0..n {
            counts[select_move(&b, 1, &cfg, &mut rng).unwrap().col()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 7.0).abs() < 0.02, "frequency {}", f);
        }
    }

    #[test]
    fn random_branch_is_uniform_over_positive_scores() {
        // deterministic search for a position whose positive-score set is a
        // proper nonempty subset of the legal moves, so uniform-over-positive
        // is distinguishable from uniform-over-legal
        let cfg = NegamaxConfig {
            omega: 1.0,
            ..NegamaxConfig::default()
        };
        let mut search_rng = ChaCha8Rng::seed_from_u64(1217);
        let (b, to_move, positive) = loop {
            let plies = search_rng.gen_range(4..=14);
            let (b, to_move) = random_position(&mut search_rng, plies);
            let sm = root_scores(&b, to_move, &cfg).unwrap();
            if sm.best_score().abs() >= cfg.win_score - cfg.depth as i32 {
                continue;
            }
            let positive: Vec<Action> = sm
                .scores()
                .iter()
                .filter(|&&(_, s)| s > 0)
                .map(|&(a, _)| a)
                .collect();
            if positive.len() >= 2 && positive.len() < sm.scores().len() {
                break (b, to_move, positive);
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 14_000usize;
        let mut counts = [0usize; 7];
        for _ in 0..n {
            counts[select_move(&b, to_move, &cfg, &mut rng).unwrap().col()] += 1;
        }
        for a in Action::all() {
            let f = counts[a.col()] as f64 / n as f64;
            if positive.contains(&a) {
                let expected = 1.0 / positive.len() as f64;
                assert!((f - expected).abs() < 0.02, "col {} frequency {}", a, f);
            } else {
                assert_eq!(counts[a.col()], 0, "non-positive column {} drawn", a);
            }
        }
    }

    #[test]
    fn select_move_always_returns_a_legal_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = NegamaxConfig {
            omega: 0.5,
            ..NegamaxConfig::default()
        };
        for _ in 0..400 {
            let plies = rng.gen_range(0..=38);
            let (b, to_move) = random_position(&mut rng, plies);
            let a = select_move(&b, to_move, &cfg, &mut rng).unwrap();
            assert!(b.legal_actions().contains(&a));
        }
    }

    #[test]
    fn terminal_positions_cannot_be_searched() {
        let mut b = BoardState::empty();
        for _ in 0..4 {
            b = b.apply(col(0), 1).unwrap();
        }
        assert!(matches!(
            root_scores(&b, -1, &NegamaxConfig::default()),
            Err(Error::NoLegalMoves)
        ));
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        assert!(NegamaxConfig::default().validate().is_ok());
        assert!(NegamaxConfig {
            depth: 0,
            ..NegamaxConfig::default()
        }
        .validate()
        .is_err());
        assert!(NegamaxConfig {
            omega: 1.5,
            ..NegamaxConfig::default()
        }
        .validate()
        .is_err());
        assert!(NegamaxConfig {
            win_score: 0,
            ..NegamaxConfig::default()
        }
        .validate()
        .is_err());
    }
}
