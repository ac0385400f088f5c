//! Property tests over the public API: log encoding, review sheets, text
//! limits and the task transition table.

use chrono::{Duration, TimeZone, Utc};
use expertloop::eventlog::{EventLog, FileLog, MemoryLog};
use expertloop::events::{Event, EventRecord};
use expertloop::ids::{TaskId, UserId};
use expertloop::kb_update::{read_csv, write_csv, ReviewRow, ShouldUpdate};
use expertloop::knowledge::FaqEntry;
use expertloop::text::{char_len, fit_suggestion, split_for_channel, truncate_at_sentence};
use expertloop::workflow::TaskState;
use proptest::prelude::*;

fn any_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ,.!?\"'\n]{0,40}",
        any::<String>().prop_map(|s| s.chars().take(40).collect()),
    ]
}

fn any_event() -> impl Strategy<Value = Event> {
    prop_oneof![
        any_text().prop_map(|u| Event::LanguageMenuOpened { user_id: UserId::new(u) }),
        (any_text(), prop::collection::vec(any_text(), 0..3)).prop_map(|(t, r)| Event::TaskReminded {
            task_id: TaskId::new(t),
            recipients: r.into_iter().map(UserId::new).collect(),
        }),
        prop::collection::vec((any_text(), any_text(), any_text()), 0..3).prop_map(|v| Event::FaqApplied {
            entries: v.into_iter().map(|(id, q, a)| (id, FaqEntry::new(q, a))).collect(),
        }),
        any_text().prop_map(|error| Event::FaqApplyFailed { error }),
    ]
}

fn records(events: Vec<Event>) -> Vec<EventRecord> {
    let t0 = Utc.with_ymd_and_hms(2024, 3, 4, 3, 30, 0).unwrap();
    events
        .into_iter()
        .enumerate()
        .map(|(i, event)| EventRecord {
            offset: i as u64,
            at: t0 + Duration::seconds(i as i64),
            event,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_text_round_trips(events in prop::collection::vec(any_event(), 0..12), split in 0usize..12) {
        let recs = records(events);
        let split = split.min(recs.len());
        let mut log = MemoryLog::new();
        log.append_batch(&recs[..split]).unwrap();
        log.append_batch(&recs[split..]).unwrap();
        prop_assert_eq!(log.next_offset(), recs.len() as u64);
        let reread = MemoryLog::from_text(log.text()).unwrap();
        prop_assert_eq!(reread.read_all().unwrap(), recs);
    }

    #[test]
    fn out_of_sequence_batches_are_refused(events in prop::collection::vec(any_event(), 2..6)) {
        let mut recs = records(events);
        recs[1].offset += 1;
        let mut log = MemoryLog::new();
        prop_assert!(log.append_batch(&recs).is_err());
        prop_assert_eq!(log.next_offset(), 0);
        prop_assert!(log.text().is_empty());
    }

    #[test]
    fn a_cut_log_file_is_a_prefix_or_refused(events in prop::collection::vec(any_event(), 1..8), cut in any::<prop::sample::Index>()) {
        let recs = records(events);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        FileLog::open(&path).unwrap().append_batch(&recs).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let at = cut.index(bytes.len());
        std::fs::write(&path, &bytes[..at]).unwrap();

        let whole_lines = bytes[..at].iter().filter(|b| **b == b'\n').count();
        let on_boundary = at == 0 || bytes[at - 1] == b'\n';
        match FileLog::open(&path).and_then(|l| l.read_all()) {
            Ok(read) => {
                prop_assert!(on_boundary, "a torn record was accepted");
                prop_assert_eq!(&read[..], &recs[..whole_lines]);
            }
            Err(_) => prop_assert!(!on_boundary, "an intact prefix was refused"),
        }
    }

    #[test]
    fn review_sheets_round_trip(rows in prop::collection::vec((any_text(), any_text(), any_text(), 0u8..3), 0..5)) {
        let rows: Vec<ReviewRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (q, a, c, mark))| ReviewRow {
                row_id: format!("tsk_{i}"),
                question: q,
                bot_answer: a.clone(),
                expert_correction: c,
                merged_final_answer: a,
                should_update: [ShouldUpdate::Yes, ShouldUpdate::No, ShouldUpdate::Unset][mark as usize],
                final_answer_for_kb: String::new(),
            })
            .collect();
        let csv = write_csv(&rows).unwrap();
        prop_assert_eq!(read_csv(&csv).unwrap(), rows);
    }

    #[test]
    fn truncation_respects_the_limit(s in any_text(), extra in "[a-z .]{0,900}", max in 1usize..200) {
        let s = format!("{s}{extra}");
        let t = truncate_at_sentence(&s, max);
        prop_assert!(char_len(&t) <= max);
        prop_assert!(s.trim().starts_with(t.as_str()));
        for piece in split_for_channel(&s, max) {
            prop_assert!(!piece.is_empty());
            prop_assert!(char_len(&piece) <= max);
        }
        prop_assert!(char_len(&fit_suggestion(&s)) <= 72);
    }
}

/// The legal edges, written out independently of the library table.
fn oracle(from: TaskState, to: TaskState) -> bool {
    use TaskState::*;
    match (from, to) {
        (AwaitingOperating, Escalated) => true,
        (AwaitingOperating | Escalated, ApprovedYes | AwaitingCorrection | Rerouted) => true,
        (AwaitingCorrection, CorrectedDone) => true,
        _ => false,
    }
}

#[test]
fn transition_table_matches_the_oracle() {
    for from in TaskState::ALL {
        for to in TaskState::ALL {
            assert_eq!(from.can_transition(to), oracle(from, to), "{from:?} -> {to:?}");
        }
        let terminal = !TaskState::ALL.iter().any(|to| oracle(from, *to));
        assert_eq!(from.is_terminal(), terminal, "{from:?}");
    }
}
