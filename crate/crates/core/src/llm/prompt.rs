//! Four-part prompts: expertise supplement, input data, task, examples.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::store::{ExampleEntry, ExampleStore};
use crate::error::{Error, Result};
use crate::series::TimeSeriesWindow;

/// Marker replaced by the serialized window.
pub const DATA_PLACEHOLDER: &str = "{data}";

pub const TRUNCATION_MARKER: &str = "[TRUNCATED]";

/// Output instruction appended to every task description so one prompt
/// yields one score per slot.
pub const OUTPUT_RULE: &str =
    "Output exactly one line per time slot, in order, each containing a float number ranging from 0 to 1.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub expertise_supplement: String,
    /// Input-data section; must contain [`DATA_PLACEHOLDER`] once.
    pub input_data: String,
    pub task_description: String,
    /// Fixed examples used in addition to the ones drawn from the store.
    pub example_slots: Vec<(String, String)>,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.input_data.matches(DATA_PLACEHOLDER).count() != 1 {
            return Err(Error::InvalidInput(format!(
                "template `{}` must contain {DATA_PLACEHOLDER} exactly once",
                self.name
            )));
        }
        Ok(())
    }

    pub fn mgab() -> Self {
        Self {
            name: "mgab".into(),
            expertise_supplement: "The input data is a T*1 time series. The time series is generated by adding the \
value x, which satisfies dx/dt = 0.25 * x(t-18)/(1+x(t-18)^10) - 0.1*x(t), and some noises within range of \
[-0.01, 0.01], where x(t) represents the value of time series at t-th time slot. There are some anomalies inserted \
into the time series, which do not obey mentioned rules. The anomalies are inserted by repeating some future \
segments of the time series to the present position."
                .into(),
            input_data: DATA_PLACEHOLDER.into(),
            task_description: format!(
                "Given the input data, please pick out the anomalies along the time series and output the \
possibility that the i-th time slot is anomalous. Please only output the corresponding possibility within the \
range of [0,1]. {OUTPUT_RULE}"
            ),
            example_slots: vec![],
        }
    }

    pub fn mustang() -> Self {
        Self {
            name: "mustang".into(),
            expertise_supplement: "The input data is a matrix with size T * 17, which represents the task duration \
time distribution for T time slots in the cloud center. For each time slot, there are 17 dimensions. The values for \
these dimensions respectively represent the ratio of tasks whose duration time belongs to [0,5), [5,10), [10,20), \
[20,30), [30,40), [40,70), [70,110), [110,150), [150,190), [190,230), [230,280), [280,330), [330,380), [380,430), \
[430,900), [900,1200), [1200,1900)."
                .into(),
            input_data: DATA_PLACEHOLDER.into(),
            task_description: format!(
                "Given a sliding window, please judge if there are many tasks slowdown at a specific time slot, \
compared with other slots in the given window. Please output a float number ranging from 0 to 1 to represent the \
probability that there are many tasks slowdown at the specific time slot. {OUTPUT_RULE}"
            ),
            example_slots: vec![],
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "mgab" => Some(Self::mgab()),
            "mustang" => Some(Self::mustang()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub window_id: String,
    pub text: String,
    /// No labelled example was available.
    pub zero_shot: bool,
    pub truncated: bool,
}

/// One `t: v0, v1, ...` row per slot, values with 6 decimals. Rows that do
/// not fit in `budget` characters are dropped and replaced by a marker.
pub fn serialize_window(window: &TimeSeriesWindow, budget: usize) -> (String, bool) {
    let x = window.values();
    let mut out = String::new();
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut line = format!("{}:", window.start_index() + i);
        for (k, v) in row.iter().enumerate() {
            let _ = write!(line, "{}{v:.6}", if k == 0 { " " } else { ", " });
        }
        line.push('\n');
        if out.len() + line.len() > budget {
            let _ = writeln!(out, "{TRUNCATION_MARKER} {} of {} slots omitted", window.len() - i, window.len());
            return (out, true);
        }
        out.push_str(&line);
    }
    (out, false)
}

fn nearest(entries: &[ExampleEntry], label: u8, t: u64) -> Option<&ExampleEntry> {
    entries.iter().filter(|e| e.label == label).min_by_key(|e| (e.timestamp.abs_diff(t), e.timestamp))
}

/// Renders the four sections in order. Examples are the positive and the
/// negative entry nearest in time to the window start; without both the
/// prompt is zero-shot and flagged.
pub fn build_prompt(
    window: &TimeSeriesWindow,
    store: &ExampleStore,
    template: &PromptTemplate,
    budget: usize,
) -> Result<Prompt> {
    template.validate()?;
    let (data, truncated) = serialize_window(window, budget);
    let t = window.start_index() as u64;
    let picked: Vec<&ExampleEntry> = match (nearest(store.entries(), 1, t), nearest(store.entries(), 0, t)) {
        (Some(p), Some(n)) => vec![p, n],
        _ => vec![],
    };
    let zero_shot = picked.is_empty() && template.example_slots.is_empty();
    if zero_shot {
        log::warn!("no labelled examples for {}; prompting zero-shot", window.id());
    }

    let mut text = String::new();
    let _ = writeln!(text, "Expertise Supplement: {}", template.expertise_supplement);
    let _ = writeln!(text, "Input data:\n{}", template.input_data.replace(DATA_PLACEHOLDER, &data));
    let _ = writeln!(text, "Task description: {}", template.task_description);
    text.push_str("Examples:\n");
    let mut k = 0;
    for (input, output) in &template.example_slots {
        k += 1;
        let _ = writeln!(text, "Example {k}: {input}\nOutput: {output}");
    }
    for e in picked {
        k += 1;
        let _ = writeln!(
            text,
            "Example {k}: {}\nTime slot {} output: {}",
            e.excerpt, e.slot_index, e.label
        );
    }
    Ok(Prompt {
        window_id: window.id(),
        text,
        zero_shot,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> TimeSeriesWindow {
        TimeSeriesWindow::from_slice(&[0.5, 0.6, 0.7, 0.8], 40).unwrap()
    }

    fn store() -> ExampleStore {
        let mut s = ExampleStore::new(8).unwrap();
        s.insert(ExampleEntry::new("1.0, 1.1, 3.0", 1, 2, 10));
        s.insert(ExampleEntry::new("1.0, 1.1, 1.2", 0, 0, 30));
        s.insert(ExampleEntry::new("0.9, 5.0", 1, 1, 38));
        s
    }

    #[test]
    fn mgab_prompt_has_generator_rule() {
        let p = build_prompt(&window(), &store(), &PromptTemplate::mgab(), 10_000).unwrap();
        assert!(p.text.contains("dx/dt = 0.25 * x(t-18)/(1+x(t-18)^10) - 0.1*x(t)"));
        assert!(p.text.contains("[-0.01, 0.01]"));
        assert!(p.text.contains("a float number ranging from 0 to 1"));
        assert!(!p.zero_shot && !p.truncated);
    }

    #[test]
    fn mustang_lists_bins() {
        let t = PromptTemplate::mustang();
        assert!(t.expertise_supplement.contains("[0,5), [5,10)"));
        let bins = t.expertise_supplement.matches(')').count();
        assert_eq!(bins, 17);
    }

    #[test]
    fn sections_in_order_and_once() {
        let p = build_prompt(&window(), &store(), &PromptTemplate::mgab(), 10_000).unwrap();
        let heads = ["Expertise Supplement:", "Input data:", "Task description:", "Examples:"];
        let pos: Vec<usize> = heads
            .iter()
            .map(|h| {
                assert_eq!(p.text.matches(h).count(), 1, "{h}");
                p.text.find(h).unwrap()
            })
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nearest_examples_are_used() {
        let p = build_prompt(&window(), &store(), &PromptTemplate::mgab(), 10_000).unwrap();
        assert!(p.text.contains("0.9, 5.0"), "positive at t=38 is nearest to 40");
        assert!(!p.text.contains("1.0, 1.1, 3.0"));
        assert!(p.text.contains("1.0, 1.1, 1.2"));
    }

    #[test]
    fn empty_store_is_zero_shot() {
        let p = build_prompt(&window(), &ExampleStore::new(2).unwrap(), &PromptTemplate::mgab(), 10_000).unwrap();
        assert!(p.zero_shot);
        assert!(!p.text.contains("Example 1"));
    }

    #[test]
    fn truncation_is_marked_and_bounded() {
        let long: Vec<f64> = (0..1000).map(|v| v as f64).collect();
        let w = TimeSeriesWindow::from_slice(&long, 0).unwrap();
        let (data, truncated) = serialize_window(&w, 200);
        assert!(truncated);
        assert!(data.contains(TRUNCATION_MARKER));
        assert!(data.len() < 200 + 64);
        let p = build_prompt(&w, &store(), &PromptTemplate::mgab(), 200).unwrap();
        assert!(p.truncated);
    }

    #[test]
    fn bad_template_rejected() {
        let mut t = PromptTemplate::mgab();
        t.input_data = "no marker".into();
        assert!(build_prompt(&window(), &store(), &t, 100).is_err());
    }
}
