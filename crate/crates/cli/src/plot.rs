//! gnuplot scripts over the CSV files of a run or sweep. Nothing here draws.

const PREAMBLE: &str = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n";

pub fn run_script(with_rel_entropy: bool) -> String {
    let mut s = String::from(PREAMBLE);
    s.push_str("set xlabel 't'\n");
    s.push_str("set output 'energy.png'\n");
    s.push_str("plot 'energy.csv' using 2:3 with lines, '' using 2:4 with lines, '' using 2:($3+$4) with lines title 'total'\n");
    s.push_str("set output 'budget.png'\n");
    s.push_str("plot 'energy.csv' using 2:10 with lines\n");
    s.push_str("set output 'defects.png'\n");
    s.push_str("plot 'defects.csv' using 2:3 with lines, '' using 2:4 with lines\n");
    if with_rel_entropy {
        s.push_str("set output 'rel_entropy.png'\n");
        s.push_str("plot 'rel_entropy.csv' using 2:3 with lines, '' using 2:6 with lines\n");
    }
    s
}

/// Log-log plot of `column` against the first column of `table`.
pub fn sweep_script(table: &str, column: usize, xlabel: &str) -> String {
    let stem = table.trim_end_matches(".csv");
    format!(
        "{PREAMBLE}set logscale xy\nset xlabel '{xlabel}'\nset output '{stem}.png'\nplot '{table}' using 1:{column} with linespoints\n"
    )
}
