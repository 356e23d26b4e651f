"""
Pruebas unitarias para el núcleo numérico (normalización, coseno, softmax)
"""
import math

import numpy as np
import pytest

from tqx.errors import DimensionMismatchError, EmptyInputError, ValidationError, ZeroRowError
from tqx.tensor_core import EmbeddingMatrix, SimilarityMatrix, cosine_similarity, l2_normalize, softmax


def matrix(rows, prefix='r'):
    rows = np.asarray(rows, dtype=np.float64)
    return EmbeddingMatrix(ids=[f'{prefix}{i}' for i in range(rows.shape[0])], values=rows)


class TestEmbeddingMatrix:
    """Pruebas para EmbeddingMatrix"""

    def test_crear_matriz_valida(self):
        """Probar crear una matriz válida"""
        m = matrix([[1, 2, 3], [4, 5, 6]])

        assert m.n_rows == 2
        assert m.dim == 3
        assert m.values.dtype == np.float32
        assert m.ids == ('r0', 'r1')

    def test_matriz_es_inmutable(self):
        """Probar que los valores no se pueden modificar"""
        m = matrix([[1.0, 2.0]])

        with pytest.raises(ValueError):
            m.values[0, 0] = 5.0

    def test_ids_repetidos(self):
        """Probar rechazo de ids repetidos"""
        with pytest.raises(ValidationError, match="repetirse"):
            EmbeddingMatrix(ids=['a', 'a'], values=np.ones((2, 2)))

    def test_valores_no_finitos(self):
        """Probar rechazo de NaN"""
        with pytest.raises(ValidationError, match="no finitos"):
            EmbeddingMatrix(ids=['a'], values=[[1.0, float('nan')]])

    def test_cantidad_de_ids_incorrecta(self):
        """Probar que la cantidad de ids coincide con las filas"""
        with pytest.raises(ValidationError):
            EmbeddingMatrix(ids=['a'], values=np.ones((2, 2)))

    def test_marcada_normalizada_sin_serlo(self):
        """Probar que normalized=True exige filas unitarias"""
        with pytest.raises(ValidationError, match="normalizada"):
            EmbeddingMatrix(ids=['a'], values=[[3.0, 4.0]], normalized=True)

    def test_seleccionar_ids(self):
        """Probar selección de filas por id en el orden pedido"""
        m = matrix([[1, 0], [0, 1], [1, 1]])
        sub = m.select_ids(['r2', 'r0'])

        assert sub.ids == ('r2', 'r0')
        np.testing.assert_array_equal(sub.values, [[1, 1], [1, 0]])

    def test_seleccionar_ids_inexistentes(self):
        """Probar error con ids ausentes"""
        with pytest.raises(ValidationError, match="ausentes"):
            matrix([[1, 0]]).select_ids(['zz'])


class TestL2Normalize:
    """Pruebas para l2_normalize"""

    def test_triangulo_3_4_5(self):
        """Probar [3,4] → [0.6, 0.8]"""
        result = l2_normalize(matrix([[3, 4]]))

        np.testing.assert_allclose(result.values[0], [0.6, 0.8], atol=1e-7)
        assert result.normalized is True

    def test_fila_ya_unitaria(self):
        """Probar que una fila unitaria no cambia"""
        result = l2_normalize(matrix([[1, 0, 0]]))

        np.testing.assert_array_equal(result.values[0], [1, 0, 0])

    def test_fila_cero(self):
        """Probar error con fila de norma cero"""
        with pytest.raises(ZeroRowError) as excinfo:
            l2_normalize(matrix([[1, 1], [0, 0]]))

        assert excinfo.value.row == 1


class TestCosineSimilarity:
    """Pruebas para cosine_similarity"""

    def test_vectores_identicos(self):
        """Probar [1,0] vs [1,0] → 1"""
        s = cosine_similarity(matrix([[1, 0]]), matrix([[1, 0]], 'k'))

        assert s.scores[0, 0] == pytest.approx(1.0)

    def test_vectores_ortogonales(self):
        """Probar [1,0] vs [0,1] → 0"""
        s = cosine_similarity(matrix([[1, 0]]), matrix([[0, 1]], 'k'))

        assert s.scores[0, 0] == pytest.approx(0.0)

    def test_diagonal(self):
        """Probar [1,1] vs [1,0] → 1/√2"""
        s = cosine_similarity(matrix([[1, 1]]), matrix([[1, 0]], 'k'))

        assert s.scores[0, 0] == pytest.approx(1 / math.sqrt(2), abs=1e-4)

    def test_contra_oraculo_por_pares(self):
        """Probar contra el producto punto por pares sobre filas unitarias"""
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.standard_normal((8, 16))
            b = rng.standard_normal((8, 16))
            s = cosine_similarity(matrix(a), matrix(b, 'k'))
            a32 = np.asarray(a, dtype=np.float32).astype(np.float64)
            b32 = np.asarray(b, dtype=np.float32).astype(np.float64)
            for i in range(8):
                for j in range(8):
                    expected = a32[i] @ b32[j] / (np.linalg.norm(a32[i]) * np.linalg.norm(b32[j]))
                    assert s.scores[i, j] == pytest.approx(expected, abs=1e-5)

    def test_valores_en_rango(self):
        """Probar que todas las similitudes están en [-1, 1]"""
        rng = np.random.default_rng(1)
        s = cosine_similarity(matrix(rng.standard_normal((20, 5))), matrix(rng.standard_normal((30, 5)), 'k'))

        assert s.scores.min() >= -1.0
        assert s.scores.max() <= 1.0
        assert s.image_ids[0] == 'r0'
        assert s.keyword_ids[0] == 'k0'

    def test_simetria(self):
        """Probar que intercambiar los argumentos da la transpuesta"""
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.standard_normal((rng.integers(1, 10), 6))
            b = rng.standard_normal((rng.integers(1, 10), 6))
            forward = cosine_similarity(matrix(a), matrix(b, 'k'))
            backward = cosine_similarity(matrix(b, 'k'), matrix(a))

            np.testing.assert_allclose(backward.scores, forward.scores.T, atol=1e-6)
            assert backward.image_ids == forward.keyword_ids

    def test_dimensiones_distintas(self):
        """Probar error de dimensión"""
        with pytest.raises(DimensionMismatchError):
            cosine_similarity(matrix([[1, 0]]), matrix([[1, 0, 0]], 'k'))

    def test_similitud_fuera_de_rango(self):
        """Probar que SimilarityMatrix rechaza valores fuera de [-1, 1]"""
        with pytest.raises(ValidationError):
            SimilarityMatrix(scores=[[1.5]])


class TestSoftmax:
    """Pruebas para softmax"""

    def test_valores_iguales(self):
        """Probar [c,c,c,c] → uniforme"""
        np.testing.assert_allclose(softmax([3.3, 3.3, 3.3, 3.3]), [0.25] * 4)

    def test_estabilidad_numerica(self):
        """Probar [1000, 0] sin desbordamiento"""
        result = softmax([1000.0, 0.0])

        np.testing.assert_allclose(result, [1.0, 0.0], atol=1e-9)

    def test_forma_cerrada(self):
        """Probar [ln 2, 0] → [2/3, 1/3]"""
        np.testing.assert_allclose(softmax([math.log(2), 0.0]), [2 / 3, 1 / 3], atol=1e-9)

    def test_suma_uno_por_fila(self):
        """Probar que cada fila suma 1 y es positiva"""
        rng = np.random.default_rng(3)
        result = softmax(rng.uniform(-1, 1, size=(5, 7)), temperature=0.1)

        np.testing.assert_allclose(result.sum(axis=1), np.ones(5))
        assert np.all(result > 0)

    def test_invariante_a_desplazamiento(self):
        """Probar que sumar una constante no cambia el resultado"""
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(-3, 3, size=rng.integers(1, 20))
            for shift in (-50.0, 3.7, 100.0):
                np.testing.assert_allclose(softmax(x + shift), softmax(x), atol=1e-9)

    def test_positivo_y_preserva_el_orden(self):
        """Probar salida estrictamente positiva con el mismo orden que la entrada"""
        rng = np.random.default_rng(5)
        for _ in range(200):
            x = np.round(rng.uniform(-5, 5, size=rng.integers(1, 20)), 3)
            temperature = float(rng.choice([0.1, 1.0, 10.0]))
            p = softmax(x, temperature)

            assert np.all(p > 0)
            np.testing.assert_array_equal(np.sign(x[:, None] - x[None, :]), np.sign(p[:, None] - p[None, :]))

    def test_temperatura_baja_concentra(self):
        """Probar que bajar la temperatura concentra el peso en el máximo"""
        scores = [0.9, 0.5, 0.1]

        assert softmax(scores, 0.05)[0] > softmax(scores, 1.0)[0]

    def test_entrada_vacia(self):
        """Probar error con entrada vacía"""
        with pytest.raises(EmptyInputError):
            softmax([])

    def test_temperatura_invalida(self):
        """Probar error con temperatura no positiva"""
        with pytest.raises(ValidationError, match="temperatura"):
            softmax([1.0, 2.0], temperature=0)
