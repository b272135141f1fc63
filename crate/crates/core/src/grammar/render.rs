use super::{AtomicAction, MacroAction, MAX_SLIDE};

/// Canonical text; consecutive identical slides fold into `move(ID, dir, N)`.
pub fn render_action(action: &MacroAction) -> String {
    let mut items: Vec<String> = Vec::new();
    let mut i = 0;
    let atoms = &action.atoms;
    while i < atoms.len() {
        match atoms[i] {
            AtomicAction::Assign { value, row, col } => {
                items.push(format!("value({value}, r{row}c{col})"));
                i += 1;
            }
            AtomicAction::Branch { index } => {
                items.push(format!("go({index})"));
                i += 1;
            }
            AtomicAction::Slide { vehicle, direction } => {
                let mut run = 1;
                while run < usize::from(MAX_SLIDE) && i + run < atoms.len() && atoms[i + run] == atoms[i] {
                    run += 1;
                }
                if run == 1 {
                    items.push(format!("move({vehicle}, {})", direction.as_str()));
                } else {
                    items.push(format!("move({vehicle}, {}, {run})", direction.as_str()));
                }
                i += run;
            }
        }
    }
    items.join("; ")
}
