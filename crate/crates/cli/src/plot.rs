//! Static SVG line charts from the CSV tables this tool writes.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{0} has no data rows")]
    Empty(String),
    #[error("{path}: unrecognized columns `{header}`")]
    UnknownSchema { path: String, header: String },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: bad number `{value}` in column `{column}`")]
    Number {
        path: String,
        column: String,
        value: String,
    },
    #[error("drawing failed: {0}")]
    Draw(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table, PlotError> {
    let name = path.display().to_string();
    let wrap = |source| PlotError::Csv {
        path: name.clone(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(wrap)?;
    let header = rdr.headers().map_err(wrap)?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(wrap)?;
    Ok(Table { header, rows })
}

impl Table {
    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn num(&self, path: &str, row: &[String], name: &str) -> Result<f64, PlotError> {
        let i = self.col(name).expect("schema checked");
        row[i].parse().map_err(|_| PlotError::Number {
            path: path.into(),
            column: name.into(),
            value: row[i].clone(),
        })
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

/// Renders `input` to SVG text. Nothing touches the filesystem except the read.
pub fn render(input: &Path) -> Result<String, PlotError> {
    let name = input.display().to_string();
    let table = read_table(input)?;
    if table.rows.is_empty() {
        return Err(PlotError::Empty(name));
    }
    let has = |cols: &[&str]| cols.iter().all(|c| table.col(c).is_some());
    let chart = if has(&["t", "p0", "p1", "p2plus"]) {
        let mut series: Vec<Series> = ["p0", "p1", "p2plus"]
            .iter()
            .map(|l| Series {
                label: (*l).into(),
                points: vec![],
            })
            .collect();
        for row in &table.rows {
            let t = table.num(&name, row, "t")?;
            for s in series.iter_mut() {
                s.points.push((t, table.num(&name, row, &s.label)?));
            }
        }
        Chart {
            title: "Photon-number probabilities vs pumping time".into(),
            x_label: "pumping time t".into(),
            y_label: "probability".into(),
            series,
        }
    } else if has(&["omega", "gamma", "eta", "controller", "p1"]) {
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for row in &table.rows {
            let key = format!(
                "{} gamma={} eta={}",
                row[table.col("controller").unwrap()],
                table.num(&name, row, "gamma")?,
                table.num(&name, row, "eta")?
            );
            groups
                .entry(key)
                .or_default()
                .push((table.num(&name, row, "omega")?, table.num(&name, row, "p1")?));
        }
        let series = groups
            .into_iter()
            .map(|(label, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series { label, points }
            })
            .collect();
        Chart {
            title: "Single-photon probability vs pump rate".into(),
            x_label: "pump rate Omega".into(),
            y_label: "p1".into(),
            series,
        }
    } else if has(&["t", "expect_PX"]) {
        let mut points = Vec::new();
        for row in &table.rows {
            points.push((table.num(&name, row, "t")?, table.num(&name, row, "expect_PX")?));
        }
        Chart {
            title: "Conditional dot occupation".into(),
            x_label: "t".into(),
            y_label: "<P_X>".into(),
            series: vec![Series {
                label: "<P_X>".into(),
                points,
            }],
        }
    } else {
        return Err(PlotError::UnknownSchema {
            path: name,
            header: table.header.join(","),
        });
    };
    draw(&chart)
}

fn bounds(chart: &Chart) -> ((f64, f64), (f64, f64)) {
    let pts = chart.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
    (pad(x0, x1), pad(y0.min(0.0), y1.max(1e-3)))
}

fn draw(chart: &Chart) -> Result<String, PlotError> {
    let err = |e: &dyn std::fmt::Display| PlotError::Draw(e.to_string());
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let ((x0, x1), (y0, y1)) = bounds(chart);
        let mut ctx = ChartBuilder::on(&root)
            .caption(&chart.title, ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| err(&e))?;
        ctx.configure_mesh()
            .x_desc(chart.x_label.as_str())
            .y_desc(chart.y_label.as_str())
            .draw()
            .map_err(|e| err(&e))?;
        for (i, s) in chart.series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            ctx.draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(|e| err(&e))?
                .label(s.label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        ctx.configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| err(&e))?;
        root.present().map_err(|e| err(&e))?;
    }
    Ok(svg)
}

/// Renders `input` and writes `output` only if rendering succeeded.
pub fn plot_file(input: &Path, output: &Path) -> Result<(), PlotError> {
    let svg = render(input)?;
    std::fs::write(output, svg).map_err(|source| PlotError::Io {
        path: output.display().to_string(),
        source,
    })
}
