/* Sequentially rounded float16 matrix multiply.
 *
 * C[i,j] = fold over r of round16(acc + round16(A[i,r] * B[r,j]))
 * with the accumulator seeded by the first product (r = 0), not by zero.
 * Every multiply and every add is rounded to binary16 (round to nearest
 * even) before the next operation sees it.  Each product and each partial
 * sum is computed in float32 and converted back to float16 immediately;
 * float32 carries more than 2*11+2 significand bits, so the float32 op
 * followed by one conversion is exactly the correctly rounded binary16 op.
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <stdint.h>
#include <stddef.h>

#define NPY_NO_DEPRECATED_API NPY_1_7_API_VERSION
#include <numpy/arrayobject.h>

#if defined(__F16C__) && defined(__AVX2__)
#include <immintrin.h>
#define HAVE_F16C 1
#else
#define HAVE_F16C 0
#endif

#if HAVE_F16C

static inline float h2f(uint16_t h)
{
    return _mm_cvtss_f32(_mm_cvtph_ps(_mm_cvtsi32_si128(h)));
}

static inline uint16_t f2h(float f)
{
    return (uint16_t)_mm_cvtsi128_si32(
        _mm_cvtps_ph(_mm_set_ss(f), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC));
}

#else

/* Software binary16 <-> binary32 conversion, round to nearest even. */

static inline float h2f(uint16_t h)
{
    uint32_t sign = (uint32_t)(h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1f;
    uint32_t frac = h & 0x3ffu;
    uint32_t bits;
    float out;

    if (exp == 0) {
        if (frac == 0) {
            bits = sign;
        } else {
            /* subnormal: normalize */
            int shift = 0;
            while (!(frac & 0x400u)) {
                frac <<= 1;
                shift++;
            }
            frac &= 0x3ffu;
            bits = sign | ((uint32_t)(127 - 15 - shift) << 23) | (frac << 13);
        }
    } else if (exp == 31) {
        bits = sign | 0x7f800000u | (frac << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (frac << 13);
    }
    memcpy(&out, &bits, 4);
    return out;
}

static inline uint16_t f2h(float f)
{
    uint32_t bits;
    memcpy(&bits, &f, 4);
    uint32_t sign = (bits >> 16) & 0x8000u;
    int32_t exp = (int32_t)((bits >> 23) & 0xff) - 127;
    uint32_t frac = bits & 0x7fffffu;

    if (exp == 128) {                       /* inf or nan */
        if (frac)
            return (uint16_t)(sign | 0x7e00u | (frac >> 13) | 0x0200u);
        return (uint16_t)(sign | 0x7c00u);
    }
    /* significand with implicit bit, 24 bits */
    uint32_t sig = frac | 0x800000u;
    int shift;
    if (exp >= 16)
        return (uint16_t)(sign | 0x7c00u);  /* overflow */
    if (exp >= -14) {
        shift = 13;                          /* keep 11 bits */
    } else {
        shift = 13 + (-14 - exp);            /* subnormal target */
        if (shift >= 32)
            return (uint16_t)sign;           /* below half of min subnormal */
        exp = -15;                           /* marks subnormal packing below */
    }
    uint32_t kept = sig >> shift;
    uint32_t rem = sig & ((1u << shift) - 1);
    uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (kept & 1)))
        kept++;
    if (exp == -15) {
        /* subnormal; a carry into 0x400 lands in the exponent field
         * exactly where the min normal lives */
        return (uint16_t)(sign | kept);
    }
    /* kept in [0x400, 0x800]; adding (kept - 0x400) lets a carry bump the
     * exponent field, and exp==15 carrying to field 31 is exactly +inf */
    return (uint16_t)(sign | (((uint32_t)(exp + 15) << 10) + (kept - 0x400u)));
}

#endif /* HAVE_F16C */

static void mm_seq_kernel(const uint16_t *A, const uint16_t *B, uint16_t *C,
                          size_t p, size_t n, size_t q)
{
    for (size_t i = 0; i < p; i++) {
        uint16_t *crow = C + i * q;
        for (size_t r = 0; r < n; r++) {
            float a = h2f(A[i * n + r]);
            const uint16_t *brow = B + r * q;
            size_t j = 0;
#if HAVE_F16C
            __m256 av = _mm256_set1_ps(a);
            if (r == 0) {
                for (; j + 8 <= q; j += 8) {
                    __m256 bv = _mm256_cvtph_ps(
                        _mm_loadu_si128((const __m128i *)(brow + j)));
                    __m128i p16 = _mm256_cvtps_ph(
                        _mm256_mul_ps(av, bv),
                        _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
                    _mm_storeu_si128((__m128i *)(crow + j), p16);
                }
            } else {
                for (; j + 8 <= q; j += 8) {
                    __m256 bv = _mm256_cvtph_ps(
                        _mm_loadu_si128((const __m128i *)(brow + j)));
                    __m128i p16 = _mm256_cvtps_ph(
                        _mm256_mul_ps(av, bv),
                        _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
                    __m256 pv = _mm256_cvtph_ps(p16);
                    __m256 accv = _mm256_cvtph_ps(
                        _mm_loadu_si128((const __m128i *)(crow + j)));
                    __m128i s16 = _mm256_cvtps_ph(
                        _mm256_add_ps(accv, pv),
                        _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
                    _mm_storeu_si128((__m128i *)(crow + j), s16);
                }
            }
#endif
            if (r == 0) {
                for (; j < q; j++)
                    crow[j] = f2h(a * h2f(brow[j]));
            } else {
                for (; j < q; j++) {
                    uint16_t prod = f2h(a * h2f(brow[j]));
                    crow[j] = f2h(h2f(crow[j]) + h2f(prod));
                }
            }
        }
    }
}

static PyObject *py_mm_seq(PyObject *self, PyObject *args)
{
    PyObject *a_obj, *b_obj;
    if (!PyArg_ParseTuple(args, "OO", &a_obj, &b_obj))
        return NULL;

    PyArrayObject *a = (PyArrayObject *)PyArray_FROM_OTF(
        a_obj, NPY_HALF, NPY_ARRAY_C_CONTIGUOUS | NPY_ARRAY_ALIGNED);
    PyArrayObject *b = (PyArrayObject *)PyArray_FROM_OTF(
        b_obj, NPY_HALF, NPY_ARRAY_C_CONTIGUOUS | NPY_ARRAY_ALIGNED);
    if (!a || !b) {
        Py_XDECREF(a);
        Py_XDECREF(b);
        return NULL;
    }
    if (PyArray_NDIM(a) != 2 || PyArray_NDIM(b) != 2 ||
        PyArray_DIM(a, 1) != PyArray_DIM(b, 0)) {
        Py_DECREF(a);
        Py_DECREF(b);
        PyErr_SetString(PyExc_ValueError, "mm_seq: shapes must be (p,n) x (n,q)");
        return NULL;
    }

    npy_intp p = PyArray_DIM(a, 0);
    npy_intp n = PyArray_DIM(a, 1);
    npy_intp q = PyArray_DIM(b, 1);
    npy_intp dims[2] = {p, q};
    PyArrayObject *c = (PyArrayObject *)PyArray_ZEROS(2, dims, NPY_HALF, 0);
    if (!c) {
        Py_DECREF(a);
        Py_DECREF(b);
        return NULL;
    }

    if (p > 0 && q > 0 && n > 0) {
        Py_BEGIN_ALLOW_THREADS
        mm_seq_kernel((const uint16_t *)PyArray_DATA(a),
                      (const uint16_t *)PyArray_DATA(b),
                      (uint16_t *)PyArray_DATA(c),
                      (size_t)p, (size_t)n, (size_t)q);
        Py_END_ALLOW_THREADS
    }

    Py_DECREF(a);
    Py_DECREF(b);
    return (PyObject *)c;
}

static PyMethodDef mm_methods[] = {
    {"mm_seq", py_mm_seq, METH_VARARGS,
     "mm_seq(a, b) -> float16 matrix product with per-operation rounding,\n"
     "reduction in ascending index order, accumulator seeded by the first\n"
     "product."},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef mm_module = {
    PyModuleDef_HEAD_INIT, "_mm", NULL, -1, mm_methods,
};

PyMODINIT_FUNC PyInit__mm(void)
{
    import_array();
    return PyModule_Create(&mm_module);
}
