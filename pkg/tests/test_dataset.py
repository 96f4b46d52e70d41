import numpy as np
import pytest

from data.dataset import Dataset, Standardizer, load_csv, standardize, write_csv
from errors import DataError


def _write(path, text):
    path.write_text(text, encoding='utf-8')
    return path


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        path = _write(tmp_path / 'src.csv', 'a,b,y\n1,2,0.5\n3,4,1.5\n5,6,2.5\n')
        data = load_csv(path, label_columns=['y'])
        assert data.X.shape == (3, 2)
        assert data.Y.shape == (3, 1)
        assert data.feature_names == ('a', 'b')
        np.testing.assert_array_equal(data.Y[:, 0], [0.5, 1.5, 2.5])

    def test_unlabeled_target(self, tmp_path):
        path = _write(tmp_path / 'tgt.csv', 'a,b\n1,2\n3,4\n')
        data = load_csv(path, domain_tag='target')
        assert not data.labeled
        assert data.label_visibility == 'eval-only'

    def test_bad_cell_names_row(self, tmp_path):
        rows = [f"{i},{i + 1}" for i in range(1, 11)]
        rows[6] = "7,abc"
        path = _write(tmp_path / 'bad.csv', 'a,b\n' + '\n'.join(rows) + '\n')
        with pytest.raises(DataError, match='row 7'):
            load_csv(path)

    def test_missing_label_column(self, tmp_path):
        path = _write(tmp_path / 'src.csv', 'a,b\n1,2\n')
        with pytest.raises(DataError, match="'y'"):
            load_csv(path, label_columns=['y'])

    def test_header_only(self, tmp_path):
        with pytest.raises(DataError, match='no data rows'):
            load_csv(_write(tmp_path / 'empty.csv', 'a,b\n'))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match='not found'):
            load_csv(tmp_path / 'missing.csv')

    def test_write_then_load_is_exact(self, tmp_path, rng):
        data = Dataset(X=rng.standard_normal((6, 2)), Y=rng.uniform(size=(6, 1)),
                       feature_names=('u', 'v'), label_names=('y',))
        path = tmp_path / 'out' / 'data.csv'
        write_csv(data, path)
        back = load_csv(path, label_columns=['y'])
        np.testing.assert_array_equal(back.X, data.X)
        np.testing.assert_array_equal(back.Y, data.Y)
        assert back.feature_names == ('u', 'v')


class TestDataset:
    def test_rejects_nonfinite(self):
        with pytest.raises(DataError):
            Dataset(X=[[1.0, np.inf]], Y=None)

    def test_rejects_row_mismatch(self):
        with pytest.raises(DataError):
            Dataset(X=np.zeros((3, 2)), Y=np.zeros((2, 1)))

    def test_rejects_unknown_domain(self):
        with pytest.raises(DataError):
            Dataset(X=np.zeros((3, 2)), Y=None, domain_tag='validation')

    def test_subset_and_domain(self, rng):
        data = Dataset(X=rng.standard_normal((5, 2)), Y=np.arange(5.0))
        part = data.subset([4, 0])
        np.testing.assert_array_equal(part.Y[:, 0], [4.0, 0.0])
        target = data.as_domain('target')
        assert (target.domain_tag, target.label_visibility) == ('target', 'eval-only')


class TestStandardizer:
    def test_zero_mean_unit_variance(self, rng):
        X = rng.standard_normal((50, 3)) * [2.0, 0.1, 5.0] + [1.0, -3.0, 10.0]
        Z = Standardizer.fit(X).transform(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z.var(axis=0), 1.0, atol=1e-12)

    def test_constant_column_unchanged(self, rng):
        X = np.column_stack([rng.standard_normal(10), np.full(10, 4.0)])
        Z = Standardizer.fit(X).transform(X)
        np.testing.assert_array_equal(Z[:, 1], X[:, 1])

    def test_inverse(self, rng):
        X = rng.standard_normal((8, 2)) * 3.0 + 1.0
        scaler = Standardizer.fit(X)
        np.testing.assert_allclose(scaler.inverse(scaler.transform(X)), X, atol=1e-12)
        again = Standardizer.from_dict(scaler.to_dict())
        np.testing.assert_array_equal(again.transform(X), scaler.transform(X))

    def test_column_mismatch(self, rng):
        scaler = Standardizer.fit(rng.standard_normal((4, 2)))
        with pytest.raises(DataError):
            scaler.transform(rng.standard_normal((4, 3)))

    def test_standardize_uses_donor_statistics(self, rng):
        donor = Dataset(X=rng.standard_normal((20, 2)) + 5.0, Y=None)
        other = Dataset(X=rng.standard_normal((7, 2)), Y=None, domain_tag='target')
        out = standardize(donor, other)
        expected = (other.X - donor.X.mean(axis=0)) / donor.X.std(axis=0)
        np.testing.assert_allclose(out.X, expected)
        assert out.domain_tag == 'target'
