"""
实验配置方案
预定义的超参数覆盖集合，通过 AppConfig.apply_profile 叠加
"""
from typing import Any, Dict


class ExperimentProfiles:
    """实验配置方案管理器"""

    @staticmethod
    def get_all_profiles() -> Dict[str, Dict[str, Any]]:
        """获取所有配置方案"""
        return {
            'full': ExperimentProfiles.get_full_profile(),
            'desk': ExperimentProfiles.get_desk_profile(),
            'gating-training': ExperimentProfiles.get_gating_training_profile(),
            'smoke': ExperimentProfiles.get_smoke_profile(),
        }

    @staticmethod
    def get_full_profile() -> Dict[str, Any]:
        """完整规模的默认超参数"""
        return {
            'description': '默认超参数：候选采样 100000，经验库每实例 2000 个样本',
            'overrides': {
                'repository': {'m_per_instance': 2000},
                'mpi': {'candidate_sample_count': 100000},
                'bench': {'budget': 800, 'repetitions': 30},
            },
        }

    @staticmethod
    def get_desk_profile() -> Dict[str, Any]:
        """桌面规模：缩小候选采样与重复次数"""
        return {
            'description': '桌面规模实验：候选采样 20000，15 次重复，预算扫描到 1600',
            'overrides': {
                'mpi': {'candidate_sample_count': 20000},
                'train': {'epochs': 200},
                'finetune': {'epochs': 100},
                'bench': {'repetitions': 15, 'sweep': [200, 400, 600, 800, 1000, 1200, 1400, 1600]},
            },
        }

    @staticmethod
    def get_gating_training_profile() -> Dict[str, Any]:
        """门控训练期间使用的廉价在线流程"""
        return {
            'description': '门控训练：每次目标函数调用都运行完整在线流程，因此缩小采样与微调轮数',
            'overrides': {
                'mpi': {'candidate_sample_count': 2000},
                'finetune': {'epochs': 20},
                'pgpe': {'half_population': 8, 'max_iter': 30},
                'gating': {'normalization_samples': 500},
            },
        }

    @staticmethod
    def get_smoke_profile() -> Dict[str, Any]:
        """冒烟测试：数秒内跑完整条流水线"""
        return {
            'description': '冒烟测试：极小的训练与采样规模，只用于检查流水线连通',
            'overrides': {
                'repository': {'m_per_instance': 64},
                'train': {'epochs': 5, 'batch_size': 16},
                'finetune': {'epochs': 3},
                'mpi': {'candidate_sample_count': 500},
                'pgpe': {'half_population': 2, 'max_iter': 2},
                'gating': {'normalization_samples': 50},
                'bench': {'repetitions': 3, 'budget': 200},
                'problems': {'cim_simulations': 10},
            },
        }
