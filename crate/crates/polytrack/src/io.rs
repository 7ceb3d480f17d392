//! Line-delimited text formats: detections, tracks, ground truth, event
//! logs and metric reports. Every file starts with a version header line;
//! `#` comments and blank lines are allowed after it. Numbers serialize
//! with six decimal places.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{GroundTruthFrame, GtObject, HypObject, HypothesisFrame, MetricReport};
use crate::lifecycle::{LifecycleEvent, LifecycleEventKind};
use crate::pipeline::{FrameInput, FrameOutput};
use crate::types::{Box3D, Category, Detection, TrackStatus};

pub const DETECTIONS_HEADER: &str = "# polytrack detections v1";
pub const TRACKS_HEADER: &str = "# polytrack tracks v1";
pub const GT_HEADER: &str = "# polytrack gt v1";
pub const EVENTS_HEADER: &str = "# polytrack events v1";
pub const REPORT_HEADER: &str = "# polytrack report v1";

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

/// Iterates payload lines after validating the version header. Yields
/// (1-based line number, content).
fn payload_lines<'a>(
    text: &'a str,
    header: &'static str,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        Some((_, first)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{header}', got '{}'", first.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: format!("empty file, expected header '{header}'"),
            })
        }
    }
    Ok(lines.filter_map(|(idx, raw)| {
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        (!content.is_empty()).then_some((idx + 1, content))
    }))
}

struct FieldParser<'a> {
    line: usize,
    fields: std::str::SplitWhitespace<'a>,
}

impl<'a> FieldParser<'a> {
    fn new(line: usize, content: &'a str) -> FieldParser<'a> {
        FieldParser {
            line,
            fields: content.split_whitespace(),
        }
    }

    fn fail(&self, message: String) -> Error {
        Error::Parse {
            line: self.line,
            message,
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str> {
        self.fields
            .next()
            .ok_or_else(|| self.fail(format!("missing field '{what}'")))
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let token = self.token(what)?;
        let value: f64 = token
            .parse()
            .map_err(|_| self.fail(format!("invalid number '{token}' for '{what}'")))?;
        if !value.is_finite() {
            return Err(self.fail(format!("non-finite value for '{what}'")));
        }
        Ok(value)
    }

    fn integer(&mut self, what: &str) -> Result<u64> {
        let token = self.token(what)?;
        token
            .parse()
            .map_err(|_| self.fail(format!("invalid integer '{token}' for '{what}'")))
    }

    fn category(&mut self) -> Result<Category> {
        let token = self.token("category")?;
        Category::parse(token).ok_or_else(|| self.fail(format!("unknown category '{token}'")))
    }

    fn finish(mut self) -> Result<()> {
        match self.fields.next() {
            Some(extra) => Err(self.fail(format!("unexpected trailing field '{extra}'"))),
            None => Ok(()),
        }
    }
}

fn box_fields(p: &mut FieldParser) -> Result<Box3D> {
    let x = p.number("x")?;
    let y = p.number("y")?;
    let z = p.number("z")?;
    let l = p.number("l")?;
    let w = p.number("w")?;
    let h = p.number("h")?;
    let yaw = p.number("yaw")?;
    let vx = p.number("vx")?;
    let vy = p.number("vy")?;
    let b = Box3D::new([x, y, z], [l, w, h], yaw, [vx, vy]);
    b.validate()
        .map_err(|message| p.fail(format!("invalid box: {message}")))?;
    Ok(b)
}

fn write_box(out: &mut String, b: &Box3D) {
    let _ = write!(
        out,
        "{} {} {} {} {} {} {} {} {}",
        fmt_num(b.center[0]),
        fmt_num(b.center[1]),
        fmt_num(b.center[2]),
        fmt_num(b.size[0]),
        fmt_num(b.size[1]),
        fmt_num(b.size[2]),
        fmt_num(b.yaw),
        fmt_num(b.velocity[0]),
        fmt_num(b.velocity[1]),
    );
}

/// Parses a detection stream into frames. Records must arrive in
/// non-decreasing frame order; interior frame gaps materialize as empty
/// frames with linearly interpolated timestamps.
pub fn parse_detections(text: &str) -> Result<Vec<FrameInput>> {
    let mut frames: Vec<FrameInput> = Vec::new();
    for (line, content) in payload_lines(text, DETECTIONS_HEADER)? {
        let mut p = FieldParser::new(line, content);
        let frame_index = p.integer("frame_index")? as usize;
        let timestamp = p.number("timestamp")?;
        let category = p.category()?;
        let box3d = box_fields(&mut p)?;
        let score = p.number("score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(p.fail(format!("score {score} outside [0, 1]")));
        }
        p.finish()?;

        match frames.last_mut() {
            Some(last) if last.frame_index == frame_index => {
                let detection_id = last.detections.len() as u32;
                last.detections.push(Detection {
                    box3d,
                    score,
                    category,
                    frame_index,
                    detection_id,
                });
            }
            Some(last) if last.frame_index > frame_index => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "frame index {frame_index} after frame {}",
                        last.frame_index
                    ),
                });
            }
            _ => {
                // materialize any interior gap as empty frames
                if let Some((last_index, t0)) =
                    frames.last().map(|f| (f.frame_index, f.timestamp))
                {
                    let gap = frame_index - last_index;
                    for k in 1..gap {
                        let fraction = k as f64 / gap as f64;
                        frames.push(FrameInput {
                            frame_index: last_index + k,
                            timestamp: t0 + fraction * (timestamp - t0),
                            detections: Vec::new(),
                        });
                    }
                }
                frames.push(FrameInput {
                    frame_index,
                    timestamp,
                    detections: vec![Detection {
                        box3d,
                        score,
                        category,
                        frame_index,
                        detection_id: 0,
                    }],
                });
            }
        }
    }
    Ok(frames)
}

pub fn detections_to_string(frames: &[FrameInput]) -> String {
    let mut out = String::new();
    out.push_str(DETECTIONS_HEADER);
    out.push('\n');
    for frame in frames {
        for det in &frame.detections {
            let _ = write!(
                out,
                "{} {} {} ",
                frame.frame_index,
                fmt_num(frame.timestamp),
                det.category
            );
            write_box(&mut out, &det.box3d);
            let _ = writeln!(out, " {}", fmt_num(det.score));
        }
    }
    out
}

/// Parses a tracks file into per-frame hypothesis sets (the track's running
/// average score is the hypothesis score).
pub fn parse_tracks(text: &str) -> Result<Vec<HypothesisFrame>> {
    let mut frames: Vec<HypothesisFrame> = Vec::new();
    for (line, content) in payload_lines(text, TRACKS_HEADER)? {
        let mut p = FieldParser::new(line, content);
        let frame_index = p.integer("frame_index")? as usize;
        let track_id = p.integer("track_id")?;
        let category = p.category()?;
        let box3d = box_fields(&mut p)?;
        let score = p.number("score_avg")?;
        let status_token = p.token("status")?;
        TrackStatus::parse(status_token)
            .ok_or_else(|| p.fail(format!("unknown status '{status_token}'")))?;
        p.finish()?;
        let object = HypObject {
            track_id,
            box3d,
            category,
            score,
        };
        match frames.last_mut() {
            Some(last) if last.frame_index == frame_index => last.objects.push(object),
            Some(last) if last.frame_index > frame_index => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "frame index {frame_index} after frame {}",
                        last.frame_index
                    ),
                });
            }
            _ => frames.push(HypothesisFrame {
                frame_index,
                objects: vec![object],
            }),
        }
    }
    Ok(frames)
}

pub fn tracks_to_string(outputs: &[FrameOutput]) -> String {
    let mut out = String::new();
    out.push_str(TRACKS_HEADER);
    out.push('\n');
    for frame in outputs {
        for track in &frame.tracks {
            let _ = write!(
                out,
                "{} {} {} ",
                frame.frame_index, track.track_id, track.category
            );
            write_box(&mut out, &track.box3d);
            let _ = writeln!(out, " {} {}", fmt_num(track.score_avg), track.status);
        }
    }
    out
}

pub fn parse_gt(text: &str) -> Result<Vec<GroundTruthFrame>> {
    let mut frames: Vec<GroundTruthFrame> = Vec::new();
    for (line, content) in payload_lines(text, GT_HEADER)? {
        let mut p = FieldParser::new(line, content);
        let frame_index = p.integer("frame_index")? as usize;
        let gt_id = p.integer("gt_id")?;
        let category = p.category()?;
        let box3d = box_fields(&mut p)?;
        p.finish()?;
        let object = GtObject {
            gt_id,
            box3d,
            category,
        };
        match frames.last_mut() {
            Some(last) if last.frame_index == frame_index => {
                if last.objects.iter().any(|o| o.gt_id == gt_id) {
                    return Err(Error::Parse {
                        line,
                        message: format!("duplicate gt id {gt_id} in frame {frame_index}"),
                    });
                }
                last.objects.push(object);
            }
            Some(last) if last.frame_index > frame_index => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "frame index {frame_index} after frame {}",
                        last.frame_index
                    ),
                });
            }
            _ => frames.push(GroundTruthFrame {
                frame_index,
                objects: vec![object],
            }),
        }
    }
    Ok(frames)
}

pub fn gt_to_string(frames: &[GroundTruthFrame]) -> String {
    let mut out = String::new();
    out.push_str(GT_HEADER);
    out.push('\n');
    for frame in frames {
        for obj in &frame.objects {
            let _ = write!(out, "{} {} {} ", frame.frame_index, obj.gt_id, obj.category);
            write_box(&mut out, &obj.box3d);
            out.push('\n');
        }
    }
    out
}

pub fn events_to_string(events: &[LifecycleEvent]) -> String {
    let mut out = String::new();
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    for e in events {
        let kind = match e.kind {
            LifecycleEventKind::Born => "born",
            LifecycleEventKind::Confirmed => "confirmed",
            LifecycleEventKind::Terminated => "terminated",
            LifecycleEventKind::Penalized => "penalized",
            LifecycleEventKind::Refreshed => "refreshed",
        };
        let _ = writeln!(
            out,
            "{} {} {} {}",
            e.frame_index,
            e.track_id,
            kind,
            fmt_num(e.score_after)
        );
    }
    out
}

/// Machine-readable metric report: `scope.metric = value` lines.
pub fn report_to_string(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    let _ = writeln!(out, "match_distance = {}", fmt_num(report.dist_threshold));
    let _ = writeln!(out, "sweep_points = {}", report.sweep_points);
    let mut emit = |scope: &str, m: &crate::eval::CategoryMetrics| {
        let _ = writeln!(out, "{scope}.gt = {}", m.gt);
        let _ = writeln!(out, "{scope}.mota = {}", fmt_num(m.mota));
        let _ = writeln!(out, "{scope}.amota = {}", fmt_num(m.amota));
        let _ = writeln!(out, "{scope}.amotp = {}", fmt_num(m.amotp));
        let _ = writeln!(out, "{scope}.samota = {}", fmt_num(m.samota));
        let _ = writeln!(out, "{scope}.recall = {}", fmt_num(m.recall));
        let _ = writeln!(out, "{scope}.ids = {}", m.id_switches);
        let _ = writeln!(out, "{scope}.fp = {}", m.false_positives);
        let _ = writeln!(out, "{scope}.fn = {}", m.false_negatives);
        let _ = writeln!(out, "{scope}.ids_sweep_total = {}", m.ids_sweep_total);
    };
    for (category, metrics) in &report.per_category {
        emit(category.name(), metrics);
    }
    emit("aggregate", &report.aggregate);
    out
}

/// Human-readable metric table.
pub fn report_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}",
        "category", "MOTA", "AMOTA", "AMOTP", "sAMOTA", "recall", "IDS", "FP", "FN"
    );
    let mut row = |name: &str, m: &crate::eval::CategoryMetrics| {
        let _ = writeln!(
            out,
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6} {:>6}",
            name,
            m.mota,
            m.amota,
            m.amotp,
            m.samota,
            m.recall,
            m.id_switches,
            m.false_positives,
            m.false_negatives
        );
    };
    for (category, metrics) in &report.per_category {
        row(category.name(), metrics);
    }
    row("aggregate", &report.aggregate);
    out
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(Error::Io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_detection_stream() {
        let frames = parse_detections("# polytrack detections v1\n").unwrap();
        assert!(frames.is_empty());
    }

    #[test]
    fn detections_group_by_frame() {
        let text = "\
# polytrack detections v1
0 0.000000 car 1.0 2.0 0.8 4.5 2.0 1.6 0.1 3.0 0.0 0.9
0 0.000000 pedestrian 5.0 2.0 0.9 0.7 0.7 1.8 0.0 1.0 0.0 0.8
1 0.500000 car 2.5 2.0 0.8 4.5 2.0 1.6 0.1 3.0 0.0 0.85
";
        let frames = parse_detections(text).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].detections.len(), 2);
        assert_eq!(frames[1].detections.len(), 1);
        assert_eq!(frames[0].detections[1].detection_id, 1);
    }

    #[test]
    fn detection_gaps_materialize_empty_frames() {
        let text = "\
# polytrack detections v1
0 0.000000 car 0 0 0.8 4.5 2.0 1.6 0 0 0 0.9
3 1.500000 car 1 0 0.8 4.5 2.0 1.6 0 0 0 0.9
";
        let frames = parse_detections(text).unwrap();
        assert_eq!(frames.len(), 4);
        assert!(frames[1].detections.is_empty());
        assert!(frames[2].detections.is_empty());
        assert!((frames[1].timestamp - 0.5).abs() < 1e-9);
        assert!((frames[2].timestamp - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parse_errors_name_line_and_token() {
        let bad_category = "# polytrack detections v1\n0 0.0 spaceship 0 0 0 1 1 1 0 0 0 0.5\n";
        match parse_detections(bad_category).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("spaceship"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let non_monotone = "\
# polytrack detections v1
2 1.0 car 0 0 0 1 1 1 0 0 0 0.5
1 0.5 car 0 0 0 1 1 1 0 0 0 0.5
";
        assert!(parse_detections(non_monotone).is_err());

        let malformed = "# polytrack detections v1\n0 zero car 0 0 0 1 1 1 0 0 0 0.5\n";
        assert!(parse_detections(malformed).is_err());

        let wrong_header = "# polytrack tracks v1\n";
        assert!(parse_detections(wrong_header).is_err());
    }

    #[test]
    fn gt_round_trip() {
        let text = "\
# polytrack gt v1
0 1 car 1.0 2.0 0.8 4.5 2.0 1.6 0.1 3.0 0.0
0 2 bus -5.0 2.0 1.7 11.0 3.0 3.5 0.0 0.0 0.0
1 1 car 2.5 2.0 0.8 4.5 2.0 1.6 0.1 3.0 0.0
";
        let frames = parse_gt(text).unwrap();
        assert_eq!(frames.len(), 2);
        let round = gt_to_string(&frames);
        assert_eq!(parse_gt(&round).unwrap(), frames);
    }

    proptest! {
        #[test]
        fn detection_round_trip(
            n_frames in 1usize..5,
            per_frame in 1usize..4,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let frames: Vec<FrameInput> = (0..n_frames).map(|i| FrameInput {
                frame_index: i,
                timestamp: i as f64 * 0.5,
                detections: (0..per_frame).map(|d| Detection {
                    box3d: Box3D::new(
                        [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-2.0..4.0)],
                        [rng.random_range(0.5..12.0), rng.random_range(0.5..3.0), rng.random_range(0.5..4.0)],
                        rng.random_range(-3.1..3.1),
                        [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)],
                    ),
                    score: (rng.random_range(0.0..1.0) * 1e6f64).round() / 1e6,
                    category: Category::from_index(rng.random_range(0..7)).unwrap(),
                    frame_index: i,
                    detection_id: d as u32,
                }).collect(),
            }).collect();
            // canonicalize to the 6-decimal wire precision, then round-trip
            let canonical = detections_to_string(&frames);
            let parsed = parse_detections(&canonical).unwrap();
            let again = detections_to_string(&parsed);
            prop_assert_eq!(canonical, again);
        }
    }
}
