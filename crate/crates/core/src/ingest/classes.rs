use crate::error::{Error, Result};

pub const BACKGROUND: &str = "background";

/// The twelve road-object tags of the reference annotation set, in index order.
pub const ROAD_CLASSES: [&str; 12] = [
    "Crack1", "Crack2", "Joint", "Patching", "Filling", "Pothole", "Manhole", "Stain", "Shadow",
    "Marking", "Scratch", "Patching2",
];

/// Ordered class names. Index 0 is always the background class; real classes
/// occupy `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    /// Builds a table from the real class names. A leading `"background"`
    /// entry is accepted and dropped.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut real: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
        if real.first().is_some_and(|n| n.eq_ignore_ascii_case(BACKGROUND)) {
            real.remove(0);
        }
        if real.is_empty() {
            return Err(Error::InvalidClassTable("at least one real class required".into()));
        }
        let mut all = vec![BACKGROUND.to_owned()];
        for name in real {
            if name.is_empty() {
                return Err(Error::InvalidClassTable("empty class name".into()));
            }
            if all.iter().any(|n| n.eq_ignore_ascii_case(name)) {
                return Err(Error::InvalidClassTable(format!("duplicate class {name:?}")));
            }
            all.push(name.to_owned());
        }
        Ok(Self { names: all })
    }

    pub fn road() -> Self {
        Self::new(&ROAD_CLASSES).expect("built-in table is valid")
    }

    /// Number of real classes `K`.
    pub fn num_classes(&self) -> usize {
        self.names.len() - 1
    }

    /// Real class indices `1..=K`.
    pub fn real_indices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.num_classes()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    /// Index of a real class; background is never returned.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().skip(1).position(|n| n == name).map(|i| i + 1)
    }

    /// Real class names in index order.
    pub fn real_names(&self) -> &[String] {
        &self.names[1..]
    }

    /// All names including background at index 0.
    pub fn all_names(&self) -> &[String] {
        &self.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn road_table_layout() {
        let t = ClassTable::road();
        assert_eq!(t.num_classes(), 12);
        assert_eq!(t.all_names().len(), 13);
        assert_eq!(t.name(0), Some(BACKGROUND));
        assert_eq!(t.index_of("Crack1"), Some(1));
        assert_eq!(t.index_of("Manhole"), Some(7));
        assert_eq!(t.index_of("Patching2"), Some(12));
        assert_eq!(t.index_of(BACKGROUND), None);
        assert_eq!(t.index_of("Pothole2"), None);
    }

    #[test]
    fn leading_background_is_dropped() {
        let t = ClassTable::new(&["background", "a", "b"]).unwrap();
        assert_eq!(t.real_names(), &["a".to_owned(), "b".to_owned()]);
    }

    #[test]
    fn invalid_tables() {
        assert!(ClassTable::new::<&str>(&[]).is_err());
        assert!(ClassTable::new(&["background"]).is_err());
        assert!(ClassTable::new(&["a", "a"]).is_err());
        assert!(ClassTable::new(&["a", "Background"]).is_err());
    }
}
