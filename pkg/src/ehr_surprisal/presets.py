"""Frozen vocabulary and decile-cutoff presets.

The 208-token vocabulary and the 113 per-category cutoff rows used for
preset tokenization. Listing order defines token ids (line order = id).
"""

PRESET_TOKENS: tuple[str, ...] = (
    # deciles
    'Q0',
    'Q1',
    'Q2',
    'Q3',
    'Q4',
    'Q5',
    'Q6',
    'Q7',
    'Q8',
    'Q9',
    # special
    'TL_START',
    'TL_END',
    'PAD',
    'TRUNC',
    'None',
    'nan',
    # race
    'RACE_white',
    'RACE_unknown',
    'RACE_other',
    'RACE_black_or_african_american',
    'RACE_asian',
    'RACE_american_indian_or_alaska_native',
    'RACE_native_hawaiian_or_other_pacific_islander',
    # ethnicity
    'ETHN_non-hispanic',
    'ETHN_unknown',
    'ETHN_hispanic',
    # sex
    'SEX_female',
    'SEX_male',
    # admission
    'ADMN_ew_emer.',
    'ADMN_eu_observation',
    'ADMN_urgent',
    'ADMN_surgical_same_day_admission',
    'ADMN_direct_emer.',
    'ADMN_direct_observation',
    'ADMN_ambulatory_observation',
    'ADMN_observation_admit',
    'ADMN_elective',
    # discharge
    'DSCG_hospice',
    'DSCG_missing',
    'DSCG_acute_inpatient_rehab_facility',
    'DSCG_home',
    'DSCG_expired',
    'DSCG_other',
    'DSCG_skilled_nursing_facility_(snf)',
    'DSCG_against_medical_advice_(ama)',
    'DSCG_long_term_care_hospital_(ltach)',
    'DSCG_acute_care_hospital',
    'DSCG_psychiatric_hospital',
    'DSCG_assisted_living',
    # transfer
    'ADT_ed',
    'ADT_ward',
    'ADT_icu',
    'ADT_l&d',
    'ADT_psych',
    'ADT_stepdown',
    'ADT_other',
    'ADT_procedural',
    # labs
    'LAB_hemoglobin',
    'LAB_platelet_count',
    'LAB_bicarbonate',
    'LAB_chloride',
    'LAB_creatinine',
    'LAB_glucose_serum',
    'LAB_magnesium',
    'LAB_potassium',
    'LAB_sodium',
    'LAB_bun',
    'LAB_inr',
    'LAB_pt',
    'LAB_ptt',
    'LAB_basophils_percent',
    'LAB_eosinophils_percent',
    'LAB_lymphocytes_percent',
    'LAB_monocytes_percent',
    'LAB_neutrophils_percent',
    'LAB_basophils_absolute',
    'LAB_albumin',
    'LAB_ferritin',
    'LAB_troponin_t',
    'LAB_calcium_total',
    'LAB_phosphate',
    'LAB_alt',
    'LAB_alkaline_phosphatase',
    'LAB_ast',
    'LAB_bilirubin_total',
    'LAB_ldh',
    'LAB_lactate',
    'LAB_pco2_arterial',
    'LAB_ph_arterial',
    'LAB_po2_arterial',
    'LAB_bilirubin_conjugated',
    'LAB_bilirubin_unconjugated',
    'LAB_total_protein',
    'LAB_calcium_ionized',
    'LAB_so2_arterial',
    'LAB_crp',
    'LAB_esr',
    'LAB_wbc',
    'LAB_ph_venous',
    'LAB_pco2_venous',
    'LAB_so2_mixed_venous',
    'LAB_so2_central_venous',
    # vitals
    'VTL_spo2',
    'VTL_sbp',
    'VTL_map',
    'VTL_weight_kg',
    'VTL_dbp',
    'VTL_heart_rate',
    'VTL_respiratory_rate',
    'VTL_height_cm',
    'VTL_temp_c',
    # medicines
    'MED_dextrose',
    'MED_dobutamine',
    'MED_norepinephrine',
    'MED_vasopressin',
    'MED_phenylephrine',
    'MED_magnesium',
    'MED_propofol',
    'MED_insulin',
    'MED_octreotide',
    'MED_epinephrine',
    'MED_pantoprazole',
    'MED_morphine',
    'MED_nicardipine',
    'MED_fentanyl',
    'MED_sodium_bicarbonate',
    'MED_diltiazem',
    'MED_dexmedetomidine',
    'MED_amiodarone',
    'MED_heparin',
    'MED_midazolam',
    'MED_cisatracurium',
    'MED_hydromorphone',
    'MED_tpn',
    'MED_milrinone',
    'MED_eptifibatide',
    'MED_dopamine',
    'MED_argatroban',
    'MED_lidocaine',
    'MED_furosemide',
    'MED_rocuronium',
    'MED_vecuronium',
    'MED_pentobarbital',
    'MED_esmolol',
    'MED_labetalol',
    'MED_nitroprusside',
    'MED_angiotensin',
    'MED_ketamine',
    'MED_clevidipine',
    'MED_lorazepam',
    'MED_bumetanide',
    'MED_naloxone',
    'MED_procainamide',
    'MED_aminocaproic',
    'MED_aminophylline',
    'MED_treprostinil',
    'MED_epoprostenol',
    # assessments
    'ASMT_gcs_total',
    'ASMT_gcs_motor',
    'ASMT_gcs_verbal',
    'ASMT_gcs_eye',
    'ASMT_rass',
    'ASMT_braden_activity',
    'ASMT_braden_friction',
    'ASMT_braden_mobility',
    'ASMT_braden_moisture',
    'ASMT_braden_nutrition',
    'ASMT_braden_sensory',
    'ASMT_braden_total',
    'ASMT_cat_cam_loc',
    'ASMT_cat_cam_inattention',
    'ASMT_cat_cam_mental',
    'ASMT_cat_cam_total',
    'ASMT_cat_cam_thinking',
    'ASMT_val_yes',
    'ASMT_val_positive',
    'ASMT_val_no',
    'ASMT_val_negative',
    'ASMT_val_unable_to_assess',
    'ASMT_val_no_(stop_-_not_delirious)',
    'ASMT_val_language_barrier',
    'ASMT_val_preexisting_advanced_dementia',
    'ASMT_val_yes_(continue)',
    'ASMT_val_unable_to_assess_(stop)',
    'ASMT_val_yes_(3_or_more_errors,_then_continue)',
    'ASMT_val_no_(less_than_3_errors_-_stop_-_not_delirious)',
    'ASMT_cat_sbt_delivery_pass_fail',
    'ASMT_val_pass',
    'ASMT_val_fail',
    # respiratory
    'RESP_mode_None',
    'RESP_mode_assist_control-volume_control',
    'RESP_mode_pressure_support/cpap',
    'RESP_mode_pressure-regulated_volume_control',
    'RESP_mode_other',
    'RESP_mode_volume_support',
    'RESP_mode_simv',
    'RESP_mode_blow_by',
    'RESP_mode_pressure_control',
    'RESP_devc_nasal_cannula',
    'RESP_devc_imv',
    'RESP_devc_None',
    'RESP_devc_face_mask',
    'RESP_devc_high_flow_nc',
    'RESP_devc_nippv',
    'RESP_devc_trach_collar',
    'RESP_devc_other',
    'RESP_devc_cpap',
    # positioning
    'POSN_prone',
)

# category -> (C1..C9); values bin as (-inf,C1)->Q0, [C1,C2)->Q1, ..., [C9,inf)->Q9
PRESET_CUTOFFS: dict[str, tuple[float, ...]] = {
    'age_at_admission': (30.0, 40.0, 49.0, 55.0, 61.0, 66.0, 71.0, 77.0, 84.0),
    'VTL_spo2': (93.0, 95.0, 96.0, 96.0, 97.0, 98.0, 99.0, 100.0, 100.0),
    'VTL_sbp': (93.0, 100.0, 106.0, 111.0, 117.0, 123.0, 129.0, 138.0, 150.0),
    'VTL_map': (61.0, 66.0, 70.0, 73.0, 77.0, 81.0, 85.0, 91.0, 100.0),
    'VTL_weight_kg': (58.2, 65.9, 71.6, 77.0, 82.7, 88.7, 95.3, 103.7, 116.7),
    'VTL_dbp': (46.0, 50.0, 54.0, 58.0, 61.0, 65.0, 69.0, 74.0, 83.0),
    'VTL_heart_rate': (64.0, 70.0, 76.0, 80.0, 85.0, 90.0, 95.0, 101.0, 111.0),
    'VTL_respiratory_rate': (13.0, 15.0, 17.0, 18.0, 19.0, 21.0, 23.0, 25.0, 28.0),
    'VTL_height_cm': (155.0, 160.0, 163.0, 168.0, 170.0, 173.0, 175.0, 178.0, 183.0),
    'VTL_temp_c': (36.3, 36.5, 36.7, 36.8, 36.9, 37.1, 37.2, 37.4, 37.8),
    'ASMT_gcs_total': (13.0, 14.0, 15.0, 15.0, 15.0, 15.0, 15.0, 15.0, 15.0),
    'ASMT_gcs_motor': (3.0, 5.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0),
    'ASMT_gcs_verbal': (0.0, 0.0, 0.0, 1.0, 4.0, 5.0, 5.0, 5.0, 5.0),
    'ASMT_gcs_eye': (1.0, 3.0, 3.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0),
    'ASMT_rass': (-4.0, -2.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
    'ASMT_braden_activity': (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 3.0),
    'ASMT_braden_friction': (1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0),
    'ASMT_braden_mobility': (1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0),
    'ASMT_braden_moisture': (3.0, 3.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0, 4.0),
    'ASMT_braden_nutrition': (2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0),
    'ASMT_braden_sensory': (2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 4.0, 4.0),
    'ASMT_braden_total': (11.0, 12.0, 13.0, 14.0, 14.0, 15.0, 16.0, 17.0, 19.0),
    'LAB_hemoglobin': (7.6, 8.2, 8.7, 9.2, 9.8, 10.5, 11.1, 11.9, 13.0),
    'LAB_platelet_count': (70.0, 119.0, 152.0, 180.0, 206.0, 234.0, 266.0, 310.0, 387.0),
    'LAB_bicarbonate': (20.0, 22.0, 23.0, 24.0, 25.0, 26.0, 27.0, 28.0, 30.0),
    'LAB_chloride': (95.0, 98.0, 100.0, 101.0, 102.0, 104.0, 105.0, 107.0, 109.0),
    'LAB_creatinine': (0.5, 0.7, 0.7, 0.8, 0.9, 1.1, 1.3, 1.7, 2.8),
    'LAB_glucose_serum': (85.0, 93.0, 100.0, 107.0, 115.0, 125.0, 138.0, 157.0, 194.0),
    'LAB_magnesium': (1.7, 1.8, 1.9, 1.9, 2.0, 2.1, 2.1, 2.2, 2.4),
    'LAB_potassium': (3.5, 3.7, 3.8, 4.0, 4.1, 4.2, 4.4, 4.6, 4.9),
    'LAB_sodium': (132.0, 135.0, 136.0, 137.0, 138.0, 139.0, 140.0, 142.0, 144.0),
    'LAB_bun': (8.0, 11.0, 13.0, 16.0, 19.0, 23.0, 28.0, 37.0, 54.0),
    'LAB_inr': (1.0, 1.1, 1.2, 1.2, 1.3, 1.4, 1.5, 1.9, 2.4),
    'LAB_pt': (11.4, 12.1, 12.8, 13.4, 14.2, 15.2, 16.9, 20.1, 26.3),
    'LAB_ptt': (26.0, 28.1, 29.9, 31.9, 34.6, 38.9, 47.6, 61.1, 78.7),
    'LAB_basophils_percent': (0.0, 0.0, 0.0, 0.2, 0.2, 0.3, 0.4, 0.6, 1.0),
    'LAB_eosinophils_percent': (0.0, 0.0, 0.1, 0.4, 1.0, 1.3, 2.0, 3.0, 4.7),
    'LAB_lymphocytes_percent': (4.0, 6.9, 9.3, 12.0, 15.2, 19.0, 23.9, 30.9, 45.0),
    'LAB_monocytes_percent': (1.8, 3.0, 4.3, 5.3, 6.3, 7.4, 8.8, 10.4, 13.9),
    'LAB_neutrophils_percent': (30.0, 51.7, 60.5, 66.7, 71.7, 76.0, 80.05, 84.3, 89.0),
    'LAB_basophils_absolute': (0.0, 0.0, 0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.07),
    'LAB_albumin': (2.3, 2.6, 2.9, 3.0, 3.2, 3.4, 3.6, 3.8, 4.1),
    'LAB_ferritin': (43.0, 90.0, 149.0, 224.0, 325.0, 468.0, 692.0, 1085.0, 2000.0),
    'LAB_troponin_t': (10.0, 10.0, 10.0, 10.0, 20.0, 50.0, 100.0, 220.0, 670.0),
    'LAB_calcium_total': (7.8, 8.1, 8.3, 8.5, 8.7, 8.8, 9.0, 9.2, 9.5),
    'LAB_phosphate': (2.3, 2.7, 3.0, 3.2, 3.4, 3.7, 3.9, 4.3, 4.9),
    'LAB_alt': (10.0, 14.0, 18.0, 22.0, 28.0, 37.0, 51.0, 77.0, 151.0),
    'LAB_alkaline_phosphatase': (54.0, 65.0, 76.0, 87.0, 101.0, 119.0, 145.0, 190.0, 296.0),
    'LAB_ast': (14.0, 18.0, 22.0, 27.0, 34.0, 43.0, 57.0, 82.0, 148.0),
    'LAB_bilirubin_total': (0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.2, 2.1, 5.3),
    'LAB_ldh': (151.0, 175.0, 197.0, 221.0, 248.0, 283.0, 333.0, 419.0, 628.0),
    'LAB_lactate': (0.9, 1.1, 1.3, 1.5, 1.7, 2.0, 2.4, 3.0, 4.4),
    'LAB_pco2_arterial': (31.0, 35.0, 37.0, 39.0, 41.0, 43.0, 46.0, 50.0, 58.0),
    'LAB_ph_arterial': (7.26, 7.31, 7.34, 7.36, 7.38, 7.4, 7.42, 7.44, 7.47),
    'LAB_po2_arterial': (46.0, 67.0, 79.0, 90.0, 102.0, 116.0, 137.0, 170.0, 259.0),
    'LAB_bilirubin_conjugated': (0.2, 0.3, 0.4, 0.7, 1.1, 1.8, 2.8, 4.6, 8.2),
    'LAB_bilirubin_unconjugated': (0.3, 0.4, 0.6, 0.8, 1.0, 1.3, 1.7, 2.4, 4.1),
    'LAB_total_protein': (4.8, 5.2, 5.4, 5.7, 5.9, 6.1, 6.3, 6.6, 7.1),
    'LAB_calcium_ionized': (4.04, 4.2, 4.32, 4.4, 4.48, 4.56, 4.68, 4.76, 4.96),
    'LAB_so2_arterial': (57.0, 66.0, 77.0, 91.0, 94.0, 96.0, 97.0, 97.0, 98.0),
    'LAB_crp': (2.7, 7.0, 13.8, 30.2, 47.7, 69.8, 98.9, 141.9, 213.92),
    'LAB_esr': (6.0, 14.0, 23.0, 33.0, 45.0, 59.0, 74.0, 92.0, 116.0),
    'LAB_wbc': (2.6, 3.6, 4.4, 5.2, 6.0, 7.0, 8.3, 10.1, 13.6),
    'LAB_ph_venous': (7.24, 7.29, 7.32, 7.35, 7.37, 7.39, 7.41, 7.43, 7.46),
    'LAB_pco2_venous': (32.0, 36.0, 39.0, 42.0, 45.0, 48.0, 52.0, 58.0, 68.0),
    'LAB_so2_mixed_venous': (52.0, 57.0, 60.0, 63.0, 65.0, 68.0, 70.0, 73.0, 78.0),
    'LAB_so2_central_venous': (50.0, 57.0, 62.0, 67.0, 71.0, 74.0, 78.0, 81.0, 86.0),
    'MED_dextrose': (0.0, 2.0, 5.18, 8.21, 10.65, 14.94, 20.78, 31.09, 50.03),
    'MED_dobutamine': (0.0, 2.0, 2.5, 2.5, 4.27, 5.0, 5.01, 7.33, 8.05),
    'MED_norepinephrine': (0.01, 0.03, 0.05, 0.06, 0.09, 0.12, 0.15, 0.2, 0.3),
    'MED_vasopressin': (0.0, 0.0, 1.2, 1.21, 1.81, 2.4, 2.4, 2.4, 3.59),
    'MED_phenylephrine': (0.0, 0.27, 0.45, 0.5, 0.76, 1.0, 1.26, 1.86, 2.93),
    'MED_magnesium': (0.0, 0.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0),
    'MED_propofol': (0.0, 10.04, 20.0, 24.97, 30.05, 39.11, 40.48, 50.11, 60.2),
    'MED_insulin': (0.0, 1.0, 2.0, 2.99, 3.0, 4.0, 5.0, 6.52, 9.41),
    'MED_octreotide': (0.0, 0.0, 49.98, 50.0, 50.0, 50.0, 50.02, 50.17, 50.35),
    'MED_epinephrine': (0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.08, 0.13, 0.3),
    'MED_pantoprazole': (0.0, 0.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.03, 8.07),
    'MED_morphine': (0.0, 0.0, 2.0, 2.0, 4.0, 5.0, 6.0, 10.0, 14.98),
    'MED_nicardipine': (0.0, 0.5, 0.5, 1.0, 1.0, 1.5, 1.97, 2.02, 3.0),
    'MED_fentanyl': (0.0, 25.0, 50.0, 50.05, 75.04, 100.0, 125.02, 151.8, 209.3),
    'MED_sodium_bicarbonate': (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    'MED_diltiazem': (0.0, 4.99, 5.0, 5.01, 9.99, 10.0, 10.05, 14.99, 15.02),
    'MED_dexmedetomidine': (0.0, 0.4, 0.4, 0.6, 0.7, 0.81, 1.0, 1.2, 1.4),
    'MED_amiodarone': (0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0),
    'MED_heparin': (0.0, 0.0, 650.2, 867.9, 1030.65, 1200.23, 1400.31, 1612.9, 1985.37),
    'MED_midazolam': (0.0, 0.5, 1.0, 2.0, 2.01, 3.04, 4.04, 6.01, 10.01),
    'MED_cisatracurium': (0.0, 0.06, 0.1, 0.13, 0.15, 0.18, 0.2, 0.25, 0.3),
    'MED_hydromorphone': (0.25, 1.0, 1.11, 2.0, 2.5, 3.02, 4.0, 4.5, 7.03),
    'MED_tpn': (0.0, 0.0, 0.0, 42.1, 58.3, 63.95, 72.9, 80.83, 91.03),
    'MED_milrinone': (0.0, 0.13, 0.25, 0.25, 0.25, 0.38, 0.38, 0.5, 0.5),
    'MED_eptifibatide': (0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.02),
    'MED_dopamine': (0.0, 2.0, 3.0, 4.0, 5.0, 5.98, 7.58, 10.01, 14.02),
    'MED_argatroban': (0.0, 0.1, 0.5, 0.69, 1.0, 1.25, 1.72, 2.36, 3.44),
    'MED_lidocaine': (0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0),
    'MED_furosemide': (0.0, 1.5, 4.0, 5.0, 8.0, 10.0, 14.05, 19.96, 20.2),
    'MED_rocuronium': (0.0, 6.01, 8.0, 8.01, 8.02, 8.09, 9.03, 10.01, 11.06),
    'MED_vecuronium': (0.0, 0.0, 0.03, 0.05, 0.05, 0.05, 0.05, 0.08, 0.1),
    'MED_pentobarbital': (0.0, 0.5, 1.0, 1.82, 2.12, 3.01, 3.95, 4.99, 5.24),
    'MED_esmolol': (0.0, 48.31, 50.1, 81.07, 100.35, 143.33, 155.25, 200.93, 257.79),
    'MED_labetalol': (0.0, 0.5, 0.5, 1.0, 1.0, 1.5, 2.0, 2.5, 3.75),
    'MED_nitroprusside': (0.0, 0.3, 0.5, 0.6, 0.8, 1.0, 1.4, 1.81, 2.42),
    'MED_angiotensin': (0.0, 0.02, 0.04, 5.01, 20.0, 20.02, 34.99, 40.03, 52.09),
    'MED_ketamine': (0.1, 0.2, 0.3, 0.4, 0.5, 0.63, 0.9, 1.14, 1.39),
    'MED_clevidipine': (0.51, 2.0, 2.17, 4.0, 4.99, 6.02, 8.01, 10.04, 14.0),
    'MED_lorazepam': (0.0, 0.5, 1.0, 2.0, 2.01, 3.0, 4.0, 5.0, 6.7),
    'MED_bumetanide': (0.5, 1.0, 2.0, 2.0, 2.02, 2.21, 3.06, 4.0, 4.08),
    'MED_naloxone': (0.0, 0.0, 0.0, 0.1, 0.2, 0.2, 0.2, 0.2, 0.3),
    'MED_procainamide': (0.0, 0.5, 1.5, 2.0, 2.02, 4.02, 4.08, 5.0, 5.0),
    'MED_aminocaproic': (0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.01, 4.0, 1000.0),
    'MED_aminophylline': (0.21, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.36, 0.4),
    'MED_treprostinil': (0.0, 0.03, 0.78, 6.0, 9.02, 11.12, 14.16, 17.0, 21.15),
    'MED_epoprostenol': (0.05, 6.05, 29.07, 42.0, 42.0, 42.01, 42.02, 42.14, 42.26),
}
