use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::image::load_preprocessed;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
pub const TRAIN_DIR: &str = "Training";
pub const TEST_DIR: &str = "Testing";

/// Image files with labels taken from their class folder.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub samples: Vec<(PathBuf, usize)>,
    /// Class folder names in lexicographic order; a class id indexes this list.
    pub class_names: Vec<String>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if is_image(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Scans `root/<class>/**/*.{png,jpg,jpeg}`.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::FolderNotFound(root.to_path_buf()));
    }
    let mut class_dirs: Vec<(String, PathBuf)> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .filter_map(|p| Some((p.file_name()?.to_str()?.to_string(), p)))
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Data(format!("{} has no class subfolders", root.display())));
    }
    let mut samples = Vec::new();
    for (label, (_, dir)) in class_dirs.iter().enumerate() {
        let mut files = Vec::new();
        collect_images(dir, &mut files)?;
        samples.extend(files.into_iter().map(|p| (p, label)));
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("no PNG/JPEG images under {}", root.display())));
    }
    samples.sort();
    Ok(DatasetIndex { samples, class_names: class_dirs.into_iter().map(|(n, _)| n).collect() })
}

/// Scans `root/Training` and `root/Testing` and checks that they share class folders.
pub fn scan_split(root: &Path) -> Result<(DatasetIndex, DatasetIndex)> {
    if !root.is_dir() {
        return Err(Error::FolderNotFound(root.to_path_buf()));
    }
    let train = scan_dataset(&root.join(TRAIN_DIR))?;
    let test = scan_dataset(&root.join(TEST_DIR))?;
    if train.class_names != test.class_names {
        return Err(Error::Data(format!(
            "training classes {:?} differ from testing classes {:?}",
            train.class_names, test.class_names
        )));
    }
    Ok((train, test))
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|(_, l)| *l).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for (_, l) in &self.samples {
            counts[*l] += 1;
        }
        counts
    }

    /// Seeded stratified subset of about `total` samples: each class contributes in
    /// proportion to its share (largest-remainder rounding), capped by what it has.
    /// The result keeps lexicographic path order.
    pub fn stratified_subset(&self, total: usize, seed: u64) -> DatasetIndex {
        if total >= self.len() {
            return self.clone();
        }
        let counts = self.class_counts();
        let n = self.len() as f64;
        let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n).collect();
        let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut missing = total - take.iter().sum::<usize>();
        for &k in order.iter().cycle().take(order.len() * 2) {
            if missing == 0 {
                break;
            }
            if take[k] < counts[k] {
                take[k] += 1;
                missing -= 1;
            }
        }

        let mut by_class: BTreeMap<usize, Vec<&(PathBuf, usize)>> = BTreeMap::new();
        for s in &self.samples {
            by_class.entry(s.1).or_default().push(s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples: Vec<(PathBuf, usize)> = Vec::with_capacity(total);
        for (label, mut members) in by_class {
            members.shuffle(&mut rng);
            samples.extend(members.into_iter().take(take[label]).cloned());
        }
        samples.sort();
        DatasetIndex { samples, class_names: self.class_names.clone() }
    }
}

/// Decoded and preprocessed images, `[3, S, S]` each, in index order.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub image_size: usize,
}

impl LoadedDataset {
    /// Decodes every sample on the worker pool; output order follows the index.
    pub fn load(index: &DatasetIndex, image_size: usize) -> Result<Self> {
        let images = index
            .samples
            .par_iter()
            .map(|(path, _)| load_preprocessed(path, image_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedDataset {
            images,
            labels: index.labels(),
            class_names: index.class_names.clone(),
            image_size,
        })
    }

    pub fn from_parts(images: Vec<Tensor<f32>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::Data(format!("{} images with {} labels", images.len(), labels.len())));
        }
        let dims = images[0].dims().to_vec();
        let (&[3, s, s2], true) = (&dims[..], images.iter().all(|t| t.dims() == dims)) else {
            return Err(Error::shape("images must all be [3,S,S]"));
        };
        if s != s2 {
            return Err(Error::shape("images must be square"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Data(format!("label {bad} out of range for {} classes", class_names.len())));
        }
        Ok(LoadedDataset { images, labels, class_names, image_size: s })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Stacks the selected samples into `[B, 3, S, S]`.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let s = self.image_size;
        let mut data = Vec::with_capacity(indices.len() * 3 * s * s);
        for &i in indices {
            data.extend_from_slice(self.images[i].data());
        }
        let batch = Tensor::from_vec(&[indices.len(), 3, s, s], data).expect("stacked image dims");
        (batch, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma};

    fn fixture(classes: &[&str], per_class: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for c in classes {
            let d = dir.path().join(c);
            fs::create_dir_all(&d).unwrap();
            for i in 0..per_class {
                GrayImage::from_pixel(4, 4, Luma([(i * 40) as u8])).save(d.join(format!("img{i}.png"))).unwrap();
            }
            fs::write(d.join("notes.txt"), "ignored").unwrap();
        }
        dir
    }

    #[test]
    fn scans_classes_and_files() {
        let dir = fixture(&["zeta", "alpha"], 3);
        let idx = scan_dataset(dir.path()).unwrap();
        assert_eq!(idx.len(), 6);
        assert_eq!(idx.class_names, vec!["alpha", "zeta"]);
        assert_eq!(idx.labels(), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn mri_class_names_sort_lexicographically() {
        let names = ["pituitary", "notumor", "glioma", "meningioma"];
        let dir = fixture(&names, 1);
        let idx = scan_dataset(dir.path()).unwrap();
        let mut sorted = names.to_vec();
        sorted.sort();
        assert_eq!(idx.class_names, sorted);
        assert_eq!(idx.class_names, vec!["glioma", "meningioma", "notumor", "pituitary"]);
    }

    #[test]
    fn missing_and_empty_roots_error() {
        let err = scan_dataset(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, Error::FolderNotFound(_)));
        assert!(err.to_string().contains("folder not found"));
        let empty = tempfile::tempdir().unwrap();
        assert!(scan_dataset(empty.path()).is_err());
    }

    #[test]
    fn stratified_subset_keeps_proportions() {
        let mut samples = Vec::new();
        for (label, n) in [(0, 50), (1, 30), (2, 20)] {
            for i in 0..n {
                samples.push((PathBuf::from(format!("c{label}/{i:03}.png")), label));
            }
        }
        let idx = DatasetIndex { samples, class_names: vec!["a".into(), "b".into(), "c".into()] };
        let sub = idx.stratified_subset(10, 1);
        assert_eq!(sub.class_counts(), vec![5, 3, 2]);
        assert_eq!(sub, idx.stratified_subset(10, 1));
        assert_ne!(sub, idx.stratified_subset(10, 2));
        assert_eq!(idx.stratified_subset(7, 0).len(), 7);
    }

    #[test]
    fn load_and_gather() {
        let dir = fixture(&["a", "b"], 2);
        let idx = scan_dataset(dir.path()).unwrap();
        let ds = LoadedDataset::load(&idx, 8).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.images.iter().all(|t| t.dims() == [3, 8, 8]));
        let (x, y) = ds.gather(&[3, 0]);
        assert_eq!(x.dims(), &[2, 3, 8, 8]);
        assert_eq!(y, vec![1, 0]);
    }
}
