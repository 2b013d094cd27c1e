//! Parsing, printing and evaluating coefficient expressions.
//!
//! ```text
//! cargo run --example expressions -- "if(x < a, sin(pi*x), exp(-t)*y)" "a=0.5, pi=3.141592653589793"
//! ```

use meltsim::exprfn::{eval, parse, parse_vector, Bindings, ParsedFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let source = args.next().unwrap_or_else(|| "if(x < a, sin(pi*x), exp(-t)*y)".into());
    let constants = args.next().unwrap_or_else(|| "a=0.5, pi=3.141592653589793".into());
    let b = Bindings::parse_list(&constants)?;
    let tree = parse(&source)?;
    println!("parsed:    {}", tree);
    println!("constants: {:?}", tree.constants());

    let compiled = ParsedFunction::new(&source, &b)?;
    println!("{:>6} {:>6} {:>6} {:>14} {:>14}", "x", "y", "t", "tree", "compiled");
    for k in 0..6 {
        let (x, y, t) = (0.2 * k as f64, 1.0 - 0.1 * k as f64, 0.5 * k as f64);
        println!(
            "{:>6.2} {:>6.2} {:>6.2} {:>14.8} {:>14.8}",
            x,
            y,
            t,
            eval(&tree, &b, x, y, t)?,
            compiled.value(x, y, t)
        );
    }

    let v = parse_vector("vmax*y*(1 - y); 0")?;
    println!("velocity has {} components: {}; {}", v.len(), v[0], v[1]);
    Ok(())
}
