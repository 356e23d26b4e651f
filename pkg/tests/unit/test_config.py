"""
Pruebas unitarias para la configuración de corridas
"""
import pytest
import yaml

from tqx.config import (
    DATASET_PRESETS,
    STANDARD_LEVELS,
    TOKEN_ENV,
    config_from_dict,
    config_to_yaml,
    load_config,
    load_labels,
    parse_override,
    provider_token,
    validate_paths,
)
from tqx.errors import ConfigError, ValidationError


class TestValoresPorDefecto:
    """Pruebas para la configuración vacía"""

    def test_protocolo_completo(self):
        """Probar que un archivo vacío reproduce los valores del protocolo"""
        config = load_config()

        assert config.retrieval.m == 1000
        assert config.retrieval.temperature == 1.0
        assert config.clustering.max_iter == 300
        assert config.clustering.top_keywords == 5
        assert config.classifier.learning_rate == 0.01
        assert config.classifier.epochs == 300
        assert config.n_seeds == 50
        assert config.dataset.metrics == ('acc', 'acc_c', 'macro_f1', 'kappa_quadratic')
        assert config.k is None

    def test_k_desde_clases(self):
        """Probar que k es la cantidad de clases cuando no se configura"""
        config = config_from_dict({'dataset': {'class_order': ['A', 'B', 'C']}})

        assert config.k == 3
        assert config.resolve()['clustering']['k'] == 3


class TestPresets:
    """Pruebas para los presets de datasets"""

    def test_preset_colon(self):
        """Probar clases ordinales y métricas del preset colon"""
        config = config_from_dict({'dataset': {'preset': 'colon'}})

        assert config.dataset.name == 'colon'
        assert config.dataset.class_order == ('BN', 'WD', 'MD', 'PD')
        assert config.dataset.cancer_classes == ('WD', 'MD', 'PD')
        assert config.k == 4

    def test_preset_pulmon(self):
        """Probar que el preset binario usa precisión y recall"""
        config = config_from_dict({'dataset': {'preset': 'wsss4luad'}})

        assert config.dataset.metrics == ('acc', 'precision', 'macro_f1', 'recall')

    def test_preset_desconocido(self):
        """Probar error con un preset inexistente"""
        with pytest.raises(ConfigError, match="Preset desconocido"):
            config_from_dict({'dataset': {'preset': 'prostate'}})

    def test_presets_disponibles(self):
        """Probar los presets incluidos"""
        assert set(DATASET_PRESETS) == {'colon', 'wsss4luad', 'bach', 'bladder'}


class TestSobrescrituras:
    """Pruebas para parse_override y load_config"""

    def test_parsear(self):
        """Probar clave con puntos y valor YAML"""
        assert parse_override('retrieval.m=50') == (['retrieval', 'm'], 50)
        assert parse_override('retrieval.renormalize=true') == (['retrieval', 'renormalize'], True)

    def test_sin_igual(self):
        """Probar error sin '='"""
        with pytest.raises(ConfigError):
            parse_override('retrieval.m')

    def test_archivo_y_sobrescritura(self, tmp_path):
        """Probar que la sobrescritura gana sobre el archivo"""
        path = tmp_path / 'c.yaml'
        path.write_text('retrieval:\n  m: 10\nn_seeds: 3\n')
        config = load_config(path, [parse_override('retrieval.m=20')])

        assert config.retrieval.m == 20
        assert config.n_seeds == 3

    def test_clave_desconocida(self):
        """Probar error con claves desconocidas"""
        with pytest.raises(ConfigError, match="desconocidas"):
            config_from_dict({'retrieval': {'mm': 3}})

    def test_booleano_invalido(self):
        """Probar error con un booleano mal escrito"""
        with pytest.raises(ConfigError, match="booleano"):
            config_from_dict({'retrieval': {'renormalize': 'maybe'}})

    def test_valor_invalido_del_clasificador(self):
        """Probar que TrainConfig valida al construirse desde el archivo"""
        with pytest.raises(ValidationError):
            config_from_dict({'classifier': {'batch_size': 1}})

    def test_archivo_inexistente(self, tmp_path):
        """Probar error con un archivo de configuración inexistente"""
        with pytest.raises(ConfigError, match="No existe"):
            load_config(tmp_path / 'nope.yaml')

    def test_manifiesto(self, tmp_path):
        """Probar que un manifiesto se lee a través de su clave config"""
        path = tmp_path / 'manifest.json'
        path.write_text('{"manifest_version": 1, "config": {"n_seeds": 7, "output_dir": null}}')
        config = load_config(path)

        assert config.n_seeds == 7
        assert config.output_dir is None

    def test_yaml_reproducible(self):
        """Probar que el YAML resuelto vuelve a dar la misma configuración"""
        config = config_from_dict({'dataset': {'preset': 'bach'}, 'levels': {'Level-3': ['Neoplastic Process']}})
        again = config_from_dict(yaml.safe_load(config_to_yaml(config)))

        assert again.resolve() == config.resolve()
        assert again.levels == {"Level-3": ("Neoplastic Process",)}


class TestRangos:
    """Pruebas para la validación de rangos y tipos de la configuración"""

    @pytest.mark.parametrize('data', [
        {'retrieval': {'m': 0}},
        {'retrieval': {'temperature': 0}},
        {'retrieval': {'selection_scope': 'test'}},
        {'clustering': {'k': 0}},
        {'clustering': {'max_iter': 0}},
        {'clustering': {'tol': -1e-4}},
        {'clustering': {'n_restarts': 0}},
        {'clustering': {'top_keywords': 0}},
        {'clustering': {'silhouette_metric': 'manhattan'}},
        {'dataset': {'test_fraction': 1.0}},
        {'provider': {'max_workers': 0}},
        {'n_seeds': 0},
        {'n_seeds': 'abc'},
        {'n_seeds': 2.5},
        {'workers': 0},
        {'seed': 'x'},
        {'classify': 'yes'},
    ])
    def test_valores_fuera_de_rango(self, data):
        """Probar ConfigError con valores fuera de rango o de tipo incorrecto"""
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_epocas_no_enteras(self):
        """Probar que el clasificador rechaza épocas no enteras"""
        with pytest.raises(ValidationError, match="epochs"):
            config_from_dict({'classifier': {'epochs': 2.5}})

    def test_valores_limite(self):
        """Probar que los mínimos válidos se aceptan"""
        config = config_from_dict({
            'retrieval': {'m': 1, 'temperature': 0.1},
            'clustering': {'k': 1, 'max_iter': 1, 'tol': 0, 'n_restarts': 1, 'top_keywords': 1},
            'n_seeds': 1,
            'workers': 1,
        })

        assert config.retrieval.m == 1
        assert config.clustering.tol == 0

    def test_niveles_estandar(self):
        """Probar que levels: standard expande a Level-0..3"""
        config = config_from_dict({'levels': STANDARD_LEVELS})

        assert list(config.levels) == ['Level-0', 'Level-1', 'Level-2', 'Level-3']
        assert config.levels['Level-0'] == ()
        assert config.levels['Level-3'] == ('Neoplastic Process',)

    def test_niveles_invalidos(self):
        """Probar error cuando levels no es un mapa ni el atajo"""
        with pytest.raises(ConfigError, match="levels"):
            config_from_dict({'levels': 'completo'})


class TestRutasYEtiquetas:
    """Pruebas para validate_paths y load_labels"""

    def test_ruta_faltante(self):
        """Probar error cuando falta una ruta requerida"""
        with pytest.raises(ConfigError, match="paths.images"):
            validate_paths(load_config(), ('images',))

    def test_archivo_de_etiquetas_inexistente(self, tmp_path):
        """Probar que el error nombra la ruta faltante"""
        missing = tmp_path / 'labels.csv'
        config = config_from_dict({'paths': {'images': str(tmp_path), 'labels': str(missing)}})

        with pytest.raises(ConfigError, match='labels.csv'):
            validate_paths(config, ('images',))

    def test_cargar_etiquetas(self, tmp_path):
        """Probar lectura del CSV id,label"""
        path = tmp_path / 'labels.csv'
        path.write_text('id,label\na,BN\nb,PD\n')
        table = load_labels(path, ('BN', 'WD', 'MD', 'PD'))

        assert table.for_ids(['b', 'a']) == ['PD', 'BN']
        assert table.classes() == ['BN', 'PD']

    def test_etiqueta_fuera_de_orden(self, tmp_path):
        """Probar error con etiquetas que no están en el orden de clases"""
        path = tmp_path / 'labels.csv'
        path.write_text('id,label\na,XX\n')

        with pytest.raises(ValidationError, match="XX"):
            load_labels(path, ('BN', 'PD'))

    def test_ids_repetidos(self, tmp_path):
        """Probar error con ids repetidos"""
        path = tmp_path / 'labels.csv'
        path.write_text('id,label\na,BN\na,PD\n')

        with pytest.raises(ValidationError, match="repetidos"):
            load_labels(path)

    def test_token_desde_entorno(self, monkeypatch):
        """Probar que el token del proveedor se lee del entorno"""
        monkeypatch.setenv(TOKEN_ENV, 'secreto')

        assert provider_token() == 'secreto'
